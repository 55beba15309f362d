//! Randomized property checks over the core invariants.

use proptest::prelude::*;

use mcsa_core::clustering::{adjusted_rand_index, cut_tree, ward_cluster, Partition, WardVariant};
use mcsa_core::reliability::{krippendorff_alpha, RaterTable};
use mcsa_core::scheme::{Channel, CodeIdx, CodingScheme, MultichannelSequence};
use mcsa_core::seqdist::{om_distance, DistanceMatrix};
use mcsa_core::stats::{kruskal_wallis, one_way_anova};

fn small_scheme() -> CodingScheme {
    CodingScheme::new(
        (0..2)
            .map(|c| Channel {
                name: format!("ch{c}"),
                codes: (0..3).map(|k| format!("c{c}k{k}")).collect(),
            })
            .collect(),
        1.0,
        1.0,
        false,
    )
    .unwrap()
}

prop_compose! {
    fn states(len: usize)(
        channels in proptest::collection::vec(
            proptest::collection::vec(proptest::option::weighted(0.8, 0u16..3), len),
            2,
        )
    ) -> Vec<Vec<Option<CodeIdx>>> {
        channels
    }
}

fn sequence(max_len: usize) -> impl Strategy<Value = Vec<Vec<Option<CodeIdx>>>> {
    (0..=max_len).prop_flat_map(states)
}

prop_compose! {
    fn observed_states(len: usize)(
        channels in proptest::collection::vec(
            proptest::collection::vec(0u16..3, len),
            2,
        )
    ) -> Vec<Vec<Option<CodeIdx>>> {
        channels
            .into_iter()
            .map(|ch| ch.into_iter().map(Some).collect())
            .collect()
    }
}

fn observed_sequence(max_len: usize) -> impl Strategy<Value = Vec<Vec<Option<CodeIdx>>>> {
    (0..=max_len).prop_flat_map(observed_states)
}

fn mk(id: &str, s: Vec<Vec<Option<CodeIdx>>>, scheme: &CodingScheme) -> MultichannelSequence {
    MultichannelSequence::new(id.to_string(), s, scheme).unwrap()
}

proptest! {
    #[test]
    fn om_is_symmetric_with_zero_diagonal(a in sequence(7), b in sequence(7)) {
        let scheme = small_scheme();
        let sa = mk("a", a, &scheme);
        let sb = mk("b", b, &scheme);
        prop_assert_eq!(om_distance(&sa, &sb, &scheme), om_distance(&sb, &sa, &scheme));
        prop_assert_eq!(om_distance(&sa, &sa, &scheme), 0.0);
    }

    // The triangle inequality holds on fully observed sequences. It does
    // NOT hold once missing states appear: zero-cost missing substitution
    // makes the missing state a free wildcard (d([a],[-]) = d([-],[b]) = 0
    // while d([a],[b]) = 1), which is the cost structure the distance is
    // specified with.
    #[test]
    fn om_satisfies_triangle_inequality_on_observed_states(
        a in observed_sequence(6),
        b in observed_sequence(6),
        c in observed_sequence(6),
    ) {
        let scheme = small_scheme();
        let sa = mk("a", a, &scheme);
        let sb = mk("b", b, &scheme);
        let sc = mk("c", c, &scheme);
        let ab = om_distance(&sa, &sb, &scheme);
        let ac = om_distance(&sa, &sc, &scheme);
        let cb = om_distance(&sc, &sb, &scheme);
        prop_assert!(ab <= ac + cb + 1e-9, "d(A,B)={ab} > d(A,C)+d(C,B)={}", ac + cb);
    }

    #[test]
    fn appending_shared_state_never_increases_distance(
        a in sequence(6),
        b in sequence(6),
        extra in proptest::collection::vec(proptest::option::weighted(0.8, 0u16..3), 2),
    ) {
        let scheme = small_scheme();
        let sa = mk("a", a.clone(), &scheme);
        let sb = mk("b", b.clone(), &scheme);
        let base = om_distance(&sa, &sb, &scheme);

        let append = |mut s: Vec<Vec<Option<CodeIdx>>>| {
            for (ch, e) in s.iter_mut().zip(&extra) {
                ch.push(*e);
            }
            s
        };
        let la = mk("a+", append(a), &scheme);
        let lb = mk("b+", append(b), &scheme);
        let extended = om_distance(&la, &lb, &scheme);
        prop_assert!(extended <= base + 1e-9, "appending shared state raised {base} to {extended}");
    }

    #[test]
    fn anova_f_invariant_to_shift_and_scale(
        seeds in proptest::collection::vec(
            proptest::collection::vec(-100.0f64..100.0, 2..8),
            2..5,
        ),
        shift in -50.0f64..50.0,
        scale in 0.1f64..10.0,
    ) {
        let base = one_way_anova(&seeds).unwrap().result.statistic;
        let moved: Vec<Vec<f64>> = seeds
            .iter()
            .map(|g| g.iter().map(|x| x * scale + shift).collect())
            .collect();
        let after = one_way_anova(&moved).unwrap().result.statistic;
        if base.is_finite() && after.is_finite() && base > 1e-9 {
            prop_assert!((base - after).abs() <= 1e-6 * base.max(1.0));
        }
    }

    #[test]
    fn kruskal_wallis_invariant_under_monotone_transform(
        groups in proptest::collection::vec(
            proptest::collection::vec(-10.0f64..10.0, 1..8),
            2..5,
        ),
    ) {
        let before = kruskal_wallis(&groups).unwrap();
        let transformed: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|&x| x * x * x + 2.0 * x).collect())
            .collect();
        let after = kruskal_wallis(&transformed).unwrap();
        prop_assert!((before.statistic - after.statistic).abs() <= 1e-9);
    }

    #[test]
    fn alpha_invariances(
        ratings in proptest::collection::vec(
            (proptest::option::weighted(0.8, 0usize..4), proptest::option::weighted(0.8, 0usize..4)),
            2..40,
        ),
        relabel in Just([2usize, 0, 3, 1]),
    ) {
        let cats = ["w", "x", "y", "z"];
        let table = |rows: &[(Option<usize>, Option<usize>)], map: Option<&[usize; 4]>, swap: bool| {
            let lookup = |v: Option<usize>| v.map(|i| {
                cats[map.map_or(i, |m| m[i])].to_string()
            });
            let r1: Vec<Option<String>> = rows.iter().map(|(a, _)| lookup(*a)).collect();
            let r2: Vec<Option<String>> = rows.iter().map(|(_, b)| lookup(*b)).collect();
            let (r1, r2) = if swap { (r2, r1) } else { (r1, r2) };
            RaterTable::new(
                vec!["r1".into(), "r2".into()],
                (0..rows.len()).map(|i| format!("u{i}")).collect(),
                None,
                vec![r1, r2],
            )
            .unwrap()
        };
        let pairable = ratings.iter().filter(|(a, b)| a.is_some() && b.is_some()).count();
        prop_assume!(pairable >= 1);

        let base = krippendorff_alpha(&table(&ratings, None, false)).unwrap();
        let swapped = krippendorff_alpha(&table(&ratings, None, true)).unwrap();
        prop_assert_eq!(base.alpha, swapped.alpha);

        let relabeled = krippendorff_alpha(&table(&ratings, Some(&relabel), false)).unwrap();
        prop_assert!((base.alpha - relabeled.alpha).abs() <= 1e-12);

        // a unit rated by only one rater changes nothing
        let mut extended = ratings.clone();
        extended.push((Some(0), None));
        let ext = krippendorff_alpha(&table(&extended, None, false)).unwrap();
        prop_assert_eq!(base.alpha, ext.alpha);
    }

    #[test]
    fn ward_heights_monotone_and_cuts_nest(
        tri in proptest::collection::vec(0.01f64..100.0, 28),
    ) {
        // 8 observations from the 28 upper-triangle entries
        let n = 8;
        let mut values = vec![0.0; n * n];
        let mut it = tri.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        let d = DistanceMatrix::from_values(
            (0..n).map(|i| format!("s{i}")).collect(),
            values,
        )
        .unwrap();
        for variant in [WardVariant::WardD2, WardVariant::Ward1] {
            let dend = ward_cluster(&d, variant).unwrap();
            for w in dend.merges.windows(2) {
                prop_assert!(w[1].height >= w[0].height - 1e-9);
            }
        }
        let dend = ward_cluster(&d, WardVariant::WardD2).unwrap();
        for k in 2..n {
            let fine = cut_tree(&dend, k).unwrap();
            let coarse = cut_tree(&dend, k - 1).unwrap();
            for cluster in 1..=fine.k {
                let targets: std::collections::BTreeSet<usize> = fine
                    .members(cluster)
                    .iter()
                    .map(|l| coarse.cluster_of(l).unwrap())
                    .collect();
                prop_assert_eq!(targets.len(), 1);
            }
        }
    }

    #[test]
    fn ari_is_one_exactly_for_relabelings(
        assignment in proptest::collection::vec(0usize..3, 4..20),
    ) {
        // normalize to first-appearance ids so Partition::new accepts it
        let normalize = |xs: &[usize]| {
            let mut ids: Vec<usize> = Vec::new();
            xs.iter()
                .map(|x| {
                    if let Some(pos) = ids.iter().position(|i| i == x) {
                        pos + 1
                    } else {
                        ids.push(*x);
                        ids.len()
                    }
                })
                .collect::<Vec<usize>>()
        };
        let labels: Vec<String> = (0..assignment.len()).map(|i| format!("s{i}")).collect();
        let a = Partition::new(labels.clone(), normalize(&assignment)).unwrap();
        let swapped: Vec<usize> = assignment.iter().map(|&x| (x + 1) % 3).collect();
        let b = Partition::new(labels, normalize(&swapped)).unwrap();
        prop_assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
    }
}
