//! Cross-module structural properties: closure/reduction round trips,
//! enumeration against counting, the maximum-likelihood property of the
//! intersection order, and restriction/intersection commutation.

mod common;

use common::{random_poset, random_permutation};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use porder::linext::{count_linear_extensions, enumerate_linear_extensions};
use porder::poset::{
    enumerate_posets, intersection_order, transitive_closure, PartialOrder, RankList, Relation,
};
use proptest::prelude::*;

fn dag_edges(n: usize, bits: &[bool]) -> Vec<(usize, usize)> {
    // Bits index the ordered pairs a < b of an acyclic template.
    let mut edges = Vec::new();
    let mut idx = 0;
    for a in 0..n {
        for b in a + 1..n {
            if bits[idx] {
                edges.push((a, b));
            }
            idx += 1;
        }
    }
    edges
}

proptest! {
    #[test]
    fn closure_is_idempotent_and_reduction_round_trips(
        n in 2usize..=8,
        bits in proptest::collection::vec(any::<bool>(), 28),
    ) {
        let edges = dag_edges(n, &bits);
        let mut rel = Relation::new(n);
        for (i, j) in edges {
            rel.set(i, j, true);
        }
        let closed = transitive_closure(&rel).unwrap();
        prop_assert_eq!(transitive_closure(&closed).unwrap(), closed.clone());

        let h = PartialOrder::from_relation(closed).unwrap();
        let mut red = Relation::new(n);
        for (i, j) in h.transitive_reduction() {
            red.set(i, j, true);
        }
        let back = PartialOrder::from_relation(transitive_closure(&red).unwrap()).unwrap();
        prop_assert_eq!(back, h);
    }

    #[test]
    fn enumeration_agrees_with_count(seed in any::<u64>(), n in 1usize..=7) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = random_poset(n, &mut rng);
        let lists = enumerate_linear_extensions(&h).unwrap();
        let (total, per_top) = count_linear_extensions(&h).unwrap();
        prop_assert_eq!(BigUint::from(lists.len()), total.clone(),
            "enumeration and count disagree");
        prop_assert_eq!(per_top.iter().sum::<BigUint>(), total);
        for l in &lists {
            prop_assert!(h.is_linear_extension(l));
        }
        // Heads are distributed per the per-top counts.
        for (k, c) in per_top.iter().enumerate() {
            let heads = lists.iter().filter(|l| l.members()[0] == k).count();
            prop_assert_eq!(BigUint::from(heads), c.clone());
        }
    }

    #[test]
    fn disjoint_union_counts_multiply_with_binomial(
        seed in any::<u64>(),
        a in 1usize..=4,
        b in 1usize..=4,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ha = random_poset(a, &mut rng);
        let hb = random_poset(b, &mut rng);
        // Embed side by side with no relations across.
        let mut edges: Vec<(usize, usize)> = ha.closure_edges();
        edges.extend(hb.closure_edges().into_iter().map(|(i, j)| (i + a, j + a)));
        let union = PartialOrder::from_edges(a + b, &edges).unwrap();
        let (tu, _) = count_linear_extensions(&union).unwrap();
        let (ta, _) = count_linear_extensions(&ha).unwrap();
        let (tb, _) = count_linear_extensions(&hb).unwrap();
        let binom = {
            let mut v = BigUint::from(1u32);
            for i in 0..b {
                v = v * BigUint::from(a + b - i) / BigUint::from(i + 1);
            }
            v
        };
        prop_assert_eq!(tu, binom * ta * tb);
    }

    #[test]
    fn restriction_commutes_with_intersection(
        seed in any::<u64>(),
        n in 2usize..=6,
        lists in 1usize..=4,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let full: Vec<RankList> = (0..lists).map(|_| random_permutation(n, &mut rng)).collect();
        let keep = rng.random_range(1..=n);
        let subset: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.7).take(keep).collect();
        let subset = if subset.is_empty() { vec![0] } else { subset };

        let whole = intersection_order(&full).unwrap();
        let (restricted, _) = whole.suborder(&subset).unwrap();

        let shortened: Vec<RankList> = full
            .iter()
            .map(|l| {
                let local: Vec<usize> = l
                    .members()
                    .iter()
                    .filter(|x| subset.contains(x))
                    .map(|x| subset.iter().position(|s| s == x).unwrap())
                    .collect();
                RankList::new(local)
            })
            .collect();
        let direct = intersection_order(&shortened).unwrap();
        prop_assert_eq!(restricted, direct);
    }
}

/// The intersection of all linear extensions recovers the order, and among
/// all posets admitting a covering multiset of extensions it uniquely
/// maximizes the noise-free likelihood (equivalently, minimizes the
/// extension count).
#[test]
fn intersection_order_is_maximum_likelihood() {
    for n in 1..=4usize {
        let space = enumerate_posets(n).unwrap();
        for h in &space {
            let exts = enumerate_linear_extensions(h).unwrap();
            let h_int = intersection_order(&exts).unwrap();
            assert_eq!(&h_int, h, "an order is the intersection of its extensions");
            let (count_int, _) = count_linear_extensions(&h_int).unwrap();
            let count_int = count_int.to_f64().unwrap();
            for other in &space {
                if exts.iter().all(|l| other.is_linear_extension(l)) {
                    let (c, _) = count_linear_extensions(other).unwrap();
                    let c = c.to_f64().unwrap();
                    // Likelihood (1/c)^N is maximized by the smallest count.
                    assert!(
                        count_int <= c,
                        "n={n}: intersection order must dominate"
                    );
                    if other != h {
                        assert!(count_int < c || exts.len() == c as usize);
                    }
                }
            }
        }
    }
}

/// Spot check that adversarial multisets (not just the full extension set)
/// keep the property: any multiset covering the extensions of h.
#[test]
fn intersection_mle_on_covering_multisets() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let space = enumerate_posets(3).unwrap();
    for h in &space {
        let exts = enumerate_linear_extensions(h).unwrap();
        // Duplicate random extensions to build a covering multiset.
        let mut multiset = exts.clone();
        for _ in 0..3 {
            let pick = rng.random_range(0..exts.len());
            multiset.push(exts[pick].clone());
        }
        let h_int = intersection_order(&multiset).unwrap();
        assert_eq!(&h_int, h);
    }
}

#[test]
fn enumerated_poset_spaces_are_valid() {
    // Every enumerated poset re-validates and the spaces grow as expected.
    let sizes: Vec<usize> = (1..=4)
        .map(|n| enumerate_posets(n).unwrap().len())
        .collect();
    assert_eq!(sizes, vec![1, 3, 19, 219]);
}
