//! Exact linear-extension counting, enumeration and sampling.
//!
//! Counting runs a memoized recursion over the ideals of the order: the count
//! for a set of remaining actors splits over its maximal elements. The memo
//! key is the bitmask of remaining actors, which is sound because a suborder
//! depends only on its actor set. All caches are created per call.

use std::collections::HashMap;

use num_bigint::BigUint;
use rand::Rng;

use crate::poset::{PartialOrder, PosetError, RankList, TiedPartialOrder};

/// Hard cap on the bitmask key; also keeps every count below `u128::MAX`
/// (the number of extensions of an n-actor order is at most n!).
pub const DEFAULT_MAX_ACTORS: usize = 30;
/// Default enumeration cap.
pub const DEFAULT_MAX_ENUMERATION: u64 = 1_000_000;

/// Predecessor masks for an order on at most `DEFAULT_MAX_ACTORS` actors:
/// `pred[j]` holds the actors strictly above `j`.
pub(crate) fn pred_masks(h: &PartialOrder, cap: usize) -> Result<Vec<u64>, PosetError> {
    let n = h.n();
    if n > cap || n > DEFAULT_MAX_ACTORS {
        return Err(PosetError::SizeLimitExceeded(n, cap.min(DEFAULT_MAX_ACTORS)));
    }
    let mut pred = vec![0u64; n];
    for j in 0..n {
        for i in 0..n {
            if h.dominates(i, j) {
                pred[j] |= 1 << i;
            }
        }
    }
    Ok(pred)
}

pub(crate) struct ExtensionCounter {
    pred: Vec<u64>,
    memo: HashMap<u64, u128>,
}

impl ExtensionCounter {
    pub(crate) fn new(h: &PartialOrder, cap: usize) -> Result<Self, PosetError> {
        Ok(ExtensionCounter {
            pred: pred_masks(h, cap)?,
            memo: HashMap::new(),
        })
    }

    pub(crate) fn full_mask(&self) -> u64 {
        if self.pred.is_empty() {
            0
        } else {
            (1u64 << self.pred.len()) - 1
        }
    }

    /// Number of linear extensions of the suborder on `mask`.
    pub(crate) fn count(&mut self, mask: u64) -> u128 {
        if mask == 0 {
            return 1;
        }
        if let Some(&c) = self.memo.get(&mask) {
            return c;
        }
        let mut total: u128 = 0;
        let mut rest = mask;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if self.pred[j] & mask == 0 {
                total += self.count(mask & !(1 << j));
            }
        }
        self.memo.insert(mask, total);
        total
    }

    /// True iff `j` is maximal within `mask`.
    pub(crate) fn is_top(&self, j: usize, mask: u64) -> bool {
        self.pred[j] & mask == 0
    }
}

/// Total number of linear extensions plus, per actor, the number headed by
/// that actor (zero for non-maximal actors).
pub fn count_linear_extensions(
    h: &PartialOrder,
) -> Result<(BigUint, Vec<BigUint>), PosetError> {
    count_linear_extensions_capped(h, DEFAULT_MAX_ACTORS)
}

pub fn count_linear_extensions_capped(
    h: &PartialOrder,
    max_actors: usize,
) -> Result<(BigUint, Vec<BigUint>), PosetError> {
    let n = h.n();
    let mut counter = ExtensionCounter::new(h, max_actors)?;
    let full = counter.full_mask();
    let mut per_top = vec![0u128; n];
    let mut total: u128 = 0;
    for j in 0..n {
        if counter.is_top(j, full) {
            let c = counter.count(full & !(1 << j));
            per_top[j] = c;
            total += c;
        }
    }
    if n == 0 {
        total = 1;
    }
    Ok((
        BigUint::from(total),
        per_top.into_iter().map(BigUint::from).collect(),
    ))
}

/// Ties count as unordered: the strict part alone constrains extensions.
pub fn count_linear_extensions_tied(
    h: &TiedPartialOrder,
) -> Result<(BigUint, Vec<BigUint>), PosetError> {
    count_linear_extensions(&h.strict_part())
}

/// All linear extensions in lexicographic order.
pub fn enumerate_linear_extensions(h: &PartialOrder) -> Result<Vec<RankList>, PosetError> {
    enumerate_linear_extensions_capped(h, DEFAULT_MAX_ENUMERATION)
}

pub fn enumerate_linear_extensions_capped(
    h: &PartialOrder,
    max_lists: u64,
) -> Result<Vec<RankList>, PosetError> {
    let n = h.n();
    let mut counter = ExtensionCounter::new(h, DEFAULT_MAX_ACTORS)?;
    let full = counter.full_mask();
    if counter.count(full) > max_lists as u128 {
        return Err(PosetError::TooManyExtensions(max_lists));
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(n);
    // Visiting candidates in increasing label order yields lexicographic
    // output.
    fn go(
        counter: &ExtensionCounter,
        mask: u64,
        prefix: &mut Vec<usize>,
        out: &mut Vec<RankList>,
    ) {
        if mask == 0 {
            out.push(RankList::new(prefix.clone()));
            return;
        }
        let mut rest = mask;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if counter.is_top(j, mask) {
                prefix.push(j);
                go(counter, mask & !(1 << j), prefix, out);
                prefix.pop();
            }
        }
    }
    go(&counter, full, &mut prefix, &mut out);
    Ok(out)
}

/// Exact uniform draw from the linear extensions via sequential top choice
/// weighted by the extension counts of what remains.
pub fn sample_linear_extension<R: Rng + ?Sized>(
    h: &PartialOrder,
    rng: &mut R,
) -> Result<RankList, PosetError> {
    let n = h.n();
    let mut counter = ExtensionCounter::new(h, DEFAULT_MAX_ACTORS)?;
    let mut mask = counter.full_mask();
    let mut out = Vec::with_capacity(n);
    while mask != 0 {
        let total = counter.count(mask);
        let mut target = rng.random_range(0..total);
        let mut rest = mask;
        let mut chosen = None;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if counter.is_top(j, mask) {
                let c = counter.count(mask & !(1 << j));
                if target < c {
                    chosen = Some(j);
                    break;
                }
                target -= c;
            }
        }
        let j = chosen.expect("counts cover the draw");
        out.push(j);
        mask &= !(1 << j);
    }
    Ok(RankList::new(out))
}

/// Runs the adjacent-transposition chain from `start`: pick a position
/// uniformly, reject on the last one, otherwise swap with the next element
/// when the pair is unordered. The state stays a linear extension and the
/// stationary law is uniform over them.
pub fn neighbor_swap_chain<R: Rng + ?Sized>(
    h: &PartialOrder,
    start: &RankList,
    steps: usize,
    rng: &mut R,
) -> Result<RankList, PosetError> {
    if !h.is_linear_extension(start) {
        return Err(PosetError::StartNotExtension);
    }
    let n = h.n();
    let mut state = start.members().to_vec();
    for _ in 0..steps {
        let i = rng.random_range(0..n);
        if i + 1 == n {
            continue;
        }
        let (a, b) = (state[i], state[i + 1]);
        if !h.dominates(a, b) {
            state.swap(i, i + 1);
        }
    }
    Ok(RankList::new(state))
}
