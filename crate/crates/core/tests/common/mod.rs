//! Shared helpers and independent oracles for the integration suites. The
//! oracles here deliberately avoid the library's optimized code paths: brute
//! force over permutations, explicit enumeration, and direct formula
//! evaluation.
#![allow(dead_code)] // each test binary uses a different subset

use porder::poset::{PartialOrder, RankList};
use rand::Rng;

/// Random labeled poset via a random topological order and edge density.
pub fn random_poset<R: Rng>(n: usize, rng: &mut R) -> PartialOrder {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let density: f64 = rng.random();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                edges.push((order[a], order[b]));
            }
        }
    }
    PartialOrder::from_edges(n, &edges).unwrap()
}

/// Every permutation of the given members.
pub fn perms(members: &[usize]) -> Vec<Vec<usize>> {
    if members.len() <= 1 {
        return vec![members.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &head) in members.iter().enumerate() {
        let mut rest = members.to_vec();
        rest.remove(i);
        for mut tail in perms(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> RankList {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    RankList::new(v)
}

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// Kolmogorov-Smirnov distance of a sample against a CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
