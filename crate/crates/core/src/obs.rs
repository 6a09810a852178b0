//! Observation models for ranked lists over a partial order: noise-free
//! uniform linear extensions, queue-jumping, and Mallows noise with a
//! Kendall-tau distance.
//!
//! Every likelihood evaluates a list against the suborder on the list's
//! members, with ties read as unordered. The Mallows partial-order likelihood
//! sums the list probability over all linear extensions with a memoized
//! recursion over the remaining-member bitmask, accumulating the extension
//! count in the same pass. All arithmetic is in log space; subset sums use
//! log-sum-exp.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::poset::{PartialOrder, RankList, TiedPartialOrder};

/// Lists longer than this cannot be evaluated (bitmask DP key).
pub const MAX_LIST_LEN: usize = 30;
/// Masks up to this many bits use a flat memo vector.
const FLAT_MEMO_LIMIT: usize = 14;

#[derive(Debug, Error, PartialEq)]
pub enum ObsError {
    #[error("jump probability must be in [0,1], got {0}")]
    BadP(f64),
    #[error("dispersion must be nonnegative and finite, got {0}")]
    BadTheta(f64),
    #[error("lists do not range over the same members")]
    MemberMismatch,
    #[error("actor {0} is not among the remaining members")]
    NotRemaining(usize),
    #[error("actor label {0} out of range")]
    UnknownActor(usize),
    #[error("duplicate actor {0} in list")]
    DuplicateActor(usize),
    #[error("list of length {0} exceeds the evaluation limit {1}")]
    SizeLimitExceeded(usize, usize),
    #[error("observed lists need at least 2 actors, got {0}")]
    ListTooShort(usize),
}

/// A batch of ranked lists over subsets of `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationSet {
    n: usize,
    lists: Vec<RankList>,
}

impl ObservationSet {
    pub fn new(n: usize, lists: Vec<RankList>) -> Result<Self, ObsError> {
        for list in &lists {
            if list.len() < 2 {
                return Err(ObsError::ListTooShort(list.len()));
            }
            let mut seen = vec![false; n];
            for &x in list.members() {
                if x >= n {
                    return Err(ObsError::UnknownActor(x));
                }
                if seen[x] {
                    return Err(ObsError::DuplicateActor(x));
                }
                seen[x] = true;
            }
        }
        Ok(ObservationSet { n, lists })
    }

    pub fn empty(n: usize) -> Self {
        ObservationSet { n, lists: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lists(&self) -> &[RankList] {
        &self.lists
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// Which noise process generated the lists, with its parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseParams {
    NoiseFree,
    QueueJump { p: f64 },
    Mallows { theta: f64 },
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), ObsError> {
        match *self {
            NoiseParams::NoiseFree => Ok(()),
            NoiseParams::QueueJump { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(ObsError::BadP(p))
                }
            }
            NoiseParams::Mallows { theta } => {
                if theta >= 0.0 && theta.is_finite() {
                    Ok(())
                } else {
                    Err(ObsError::BadTheta(theta))
                }
            }
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            NoiseParams::NoiseFree => f64::NAN,
            NoiseParams::QueueJump { p } => p,
            NoiseParams::Mallows { theta } => theta,
        }
    }
}

/// The suborder on a list's members, re-indexed to local indices with
/// per-actor dominator masks.
pub(crate) struct LocalOrder {
    m: usize,
    pred: Vec<u32>,
}

impl LocalOrder {
    pub(crate) fn new(h: &PartialOrder, members: &[usize]) -> Result<Self, ObsError> {
        let m = members.len();
        if m > MAX_LIST_LEN {
            return Err(ObsError::SizeLimitExceeded(m, MAX_LIST_LEN));
        }
        for &x in members {
            if x >= h.n() {
                return Err(ObsError::UnknownActor(x));
            }
        }
        let mut pred = vec![0u32; m];
        for a in 0..m {
            for b in 0..m {
                if a != b && h.dominates(members[a], members[b]) {
                    pred[b] |= 1 << a;
                }
            }
        }
        Ok(LocalOrder { m, pred })
    }

    fn full_mask(&self) -> u32 {
        if self.m == 0 {
            0
        } else if self.m == 32 {
            u32::MAX
        } else {
            (1u32 << self.m) - 1
        }
    }

    #[inline]
    fn is_top(&self, j: usize, mask: u32) -> bool {
        self.pred[j] & mask == 0
    }
}

enum CountMemo {
    Flat(Vec<u128>),
    Map(HashMap<u32, u128>),
}

impl CountMemo {
    fn new(m: usize) -> Self {
        if m <= FLAT_MEMO_LIMIT {
            CountMemo::Flat(vec![u128::MAX; 1 << m])
        } else {
            CountMemo::Map(HashMap::new())
        }
    }

    #[inline]
    fn get(&self, mask: u32) -> Option<u128> {
        match self {
            CountMemo::Flat(v) => {
                let c = v[mask as usize];
                (c != u128::MAX).then_some(c)
            }
            CountMemo::Map(m) => m.get(&mask).copied(),
        }
    }

    #[inline]
    fn set(&mut self, mask: u32, value: u128) {
        match self {
            CountMemo::Flat(v) => v[mask as usize] = value,
            CountMemo::Map(m) => {
                m.insert(mask, value);
            }
        }
    }
}

/// ln(m!) via the exact integer factorial; all callers of the degenerate
/// parameter limits share this expression so the limits agree bit-for-bit.
pub(crate) fn ln_factorial(m: usize) -> f64 {
    let mut f: u128 = 1;
    for i in 2..=m {
        f *= i as u128;
    }
    (f as f64).ln()
}

fn count_mask(lo: &LocalOrder, memo: &mut CountMemo, mask: u32) -> u128 {
    if mask == 0 {
        return 1;
    }
    if let Some(c) = memo.get(mask) {
        return c;
    }
    let mut total = 0u128;
    let mut rest = mask;
    while rest != 0 {
        let j = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        if lo.is_top(j, mask) {
            total += count_mask(lo, memo, mask & !(1 << j));
        }
    }
    memo.set(mask, total);
    total
}

fn check_list_against(h: &PartialOrder, y: &RankList) -> Result<(), ObsError> {
    let mut seen = vec![false; h.n()];
    for &x in y.members() {
        if x >= h.n() {
            return Err(ObsError::UnknownActor(x));
        }
        if seen[x] {
            return Err(ObsError::DuplicateActor(x));
        }
        seen[x] = true;
    }
    Ok(())
}

/// Log probability of `y` as a uniform draw from the linear extensions of the
/// suborder on its members: `-ln L` when `y` extends it, `-inf` otherwise.
pub fn noisefree_loglik(y: &RankList, h: &PartialOrder) -> Result<f64, ObsError> {
    check_list_against(h, y)?;
    let lo = LocalOrder::new(h, y.members())?;
    // Local index = position in y, so y extends the suborder iff no later
    // position dominates an earlier one.
    let m = y.len();
    for a in 0..m {
        for b in a + 1..m {
            if lo.pred[a] >> b & 1 == 1 {
                return Ok(f64::NEG_INFINITY);
            }
        }
    }
    let mut memo = CountMemo::new(m);
    let total = count_mask(&lo, &mut memo, lo.full_mask());
    Ok(-(total as f64).ln())
}

/// Queue-jumping log likelihood: at each position the recorded actor was,
/// with probability `p`, a uniform pick from the remainder, and otherwise the
/// head of a uniform linear extension of the remaining suborder.
pub fn qj_loglik(y: &RankList, h: &PartialOrder, p: f64) -> Result<f64, ObsError> {
    NoiseParams::QueueJump { p }.validate()?;
    if p == 0.0 {
        // The head-fraction product telescopes to the uniform-extension law.
        return noisefree_loglik(y, h);
    }
    check_list_against(h, y)?;
    let lo = LocalOrder::new(h, y.members())?;
    let m = y.len();
    if p == 1.0 {
        return Ok(-ln_factorial(m));
    }
    let mut memo = CountMemo::new(m);
    let mut ll = 0.0;
    for i in 0..m.saturating_sub(1) {
        let remaining = (m - i) as f64;
        let suffix = lo.full_mask() & !((1u32 << i) - 1);
        let head = if lo.is_top(i, suffix) {
            count_mask(&lo, &mut memo, suffix & !(1 << i)) as f64
        } else {
            0.0
        };
        let total = count_mask(&lo, &mut memo, suffix) as f64;
        ll += (p / remaining + (1.0 - p) * head / total).ln();
    }
    Ok(ll)
}

/// Draws a list over `members` from the queue-jumping process.
pub fn sample_qj<R: Rng + ?Sized>(
    h: &PartialOrder,
    members: &[usize],
    p: f64,
    rng: &mut R,
) -> Result<RankList, ObsError> {
    NoiseParams::QueueJump { p }.validate()?;
    let lo = LocalOrder::new(h, members)?;
    let m = members.len();
    let mut memo = CountMemo::new(m);
    let mut mask = lo.full_mask();
    let mut out = Vec::with_capacity(m);
    while mask != 0 {
        let local = if rng.random::<f64>() < p {
            // Uniform pick among remaining actors.
            let idx = rng.random_range(0..mask.count_ones());
            nth_set_bit(mask, idx)
        } else {
            let total = count_mask(&lo, &mut memo, mask);
            let mut target = rng.random_range(0..total);
            let mut rest = mask;
            let mut chosen = None;
            while rest != 0 {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                if lo.is_top(j, mask) {
                    let c = count_mask(&lo, &mut memo, mask & !(1 << j));
                    if target < c {
                        chosen = Some(j);
                        break;
                    }
                    target -= c;
                }
            }
            chosen.expect("head counts cover the draw")
        };
        out.push(members[local]);
        mask &= !(1 << local);
    }
    Ok(RankList::new(out))
}

fn nth_set_bit(mask: u32, n: u32) -> usize {
    let mut rest = mask;
    for _ in 0..n {
        rest &= rest - 1;
    }
    rest.trailing_zeros() as usize
}

/// Number of discordantly ordered pairs between two lists over the same
/// member set.
pub fn kendall_tau(y: &RankList, l: &RankList) -> Result<usize, ObsError> {
    if y.len() != l.len() {
        return Err(ObsError::MemberMismatch);
    }
    let max = y.members().iter().chain(l.members()).max().copied().unwrap_or(0);
    let mut pos = vec![usize::MAX; max + 1];
    for (i, &x) in l.members().iter().enumerate() {
        pos[x] = i;
    }
    let mut d = 0usize;
    for a in 0..y.len() {
        let pa = pos[y.members()[a]];
        if pa == usize::MAX {
            return Err(ObsError::MemberMismatch);
        }
        for b in a + 1..y.len() {
            let pb = pos[y.members()[b]];
            if pb == usize::MAX {
                return Err(ObsError::MemberMismatch);
            }
            if pa > pb {
                d += 1;
            }
        }
    }
    Ok(d)
}

/// Per-position truncated geometric sums `psi_i = sum_{j=1..i} e^{-(j-1)
/// theta}` and their product, the Kendall-tau Mallows normalizer.
pub fn mallows_psi(m: usize, theta: f64) -> Result<f64, ObsError> {
    Ok(mallows_log_normalizer(m, theta)?.exp())
}

pub fn mallows_log_normalizer(m: usize, theta: f64) -> Result<f64, ObsError> {
    NoiseParams::Mallows { theta }.validate()?;
    if m == 0 {
        return Err(ObsError::SizeLimitExceeded(0, MAX_LIST_LEN));
    }
    Ok(log_psi_table(m, theta).iter().skip(1).sum())
}

/// `log psi_s` for s = 0..=m (index 0 unused, kept for direct indexing by
/// remaining-set size).
fn log_psi_table(m: usize, theta: f64) -> Vec<f64> {
    let mut table = Vec::with_capacity(m + 1);
    table.push(0.0);
    let q = (-theta).exp();
    let mut psi = 0.0;
    let mut term = 1.0;
    for _ in 1..=m {
        psi += term;
        term *= q;
        table.push(psi.ln());
    }
    table
}

/// Mallows log probability of list `y` centred at `l`:
/// `-theta d(l, y) - ln Psi_m`.
pub fn mallows_list_logprob(y: &RankList, l: &RankList, theta: f64) -> Result<f64, ObsError> {
    let d = kendall_tau(y, l)?;
    Ok(-theta * d as f64 - mallows_log_normalizer(y.len(), theta)?)
}

/// Log probability that `k` is selected next when `y_rem` lists the
/// remaining members in reference order: `-theta rank - ln psi_s` with rank
/// counting the remaining members ahead of `k`.
pub fn mallows_first_choice_logprob(
    k: usize,
    y_rem: &RankList,
    theta: f64,
) -> Result<f64, ObsError> {
    NoiseParams::Mallows { theta }.validate()?;
    let rank = y_rem
        .position_of(k)
        .ok_or(ObsError::NotRemaining(k))?;
    let s = y_rem.len();
    Ok(-theta * rank as f64 - log_psi_table(s, theta)[s])
}

enum MallowsMemo {
    Flat(Vec<(f64, u128)>),
    Map(HashMap<u32, (f64, u128)>),
}

impl MallowsMemo {
    fn new(m: usize) -> Self {
        if m <= FLAT_MEMO_LIMIT {
            MallowsMemo::Flat(vec![(f64::NAN, 0); 1 << m])
        } else {
            MallowsMemo::Map(HashMap::new())
        }
    }

    #[inline]
    fn get(&self, mask: u32) -> Option<(f64, u128)> {
        match self {
            MallowsMemo::Flat(v) => {
                let e = v[mask as usize];
                (!e.0.is_nan()).then_some(e)
            }
            MallowsMemo::Map(m) => m.get(&mask).copied(),
        }
    }

    #[inline]
    fn set(&mut self, mask: u32, value: (f64, u128)) {
        match self {
            MallowsMemo::Flat(v) => v[mask as usize] = value,
            MallowsMemo::Map(m) => {
                m.insert(mask, value);
            }
        }
    }
}

/// Recursion over maximal elements: the weighted extension sum and the
/// extension count of the suborder on `mask`, where local index equals
/// position in the data list. Splitting off a maximal element `k`
/// contributes its selection probability against the remaining members of
/// the reference list times the value of the rest.
fn mallows_f(
    lo: &LocalOrder,
    log_psi: &[f64],
    theta: f64,
    memo: &mut MallowsMemo,
    factorials: &[u128],
    mask: u32,
) -> (f64, u128) {
    if mask == 0 {
        return (0.0, 1);
    }
    if let Some(hit) = memo.get(mask) {
        return hit;
    }
    // Empty suborder: every ordering is an extension and the selection
    // probabilities are normalized, so the weighted sum is one.
    let mut has_relation = false;
    {
        let mut rest = mask;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if lo.pred[j] & mask != 0 {
                has_relation = true;
                break;
            }
        }
    }
    let size = mask.count_ones() as usize;
    if !has_relation {
        let value = (0.0, factorials[size]);
        memo.set(mask, value);
        return value;
    }
    let mut log_f = f64::NEG_INFINITY;
    let mut count = 0u128;
    let mut rest = mask;
    while rest != 0 {
        let k = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        if !lo.is_top(k, mask) {
            continue;
        }
        // Members of the reference list ahead of k among those remaining.
        let rank = (mask & ((1u32 << k) - 1)).count_ones() as f64;
        let log_q = -theta * rank - log_psi[size];
        let (f_sub, c_sub) = mallows_f(lo, log_psi, theta, memo, factorials, mask & !(1 << k));
        log_f = log_sum_exp(log_f, log_q + f_sub);
        count += c_sub;
    }
    memo.set(mask, (log_f, count));
    (log_f, count)
}

#[inline]
fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Mallows log likelihood of `y` against the suborder on its members:
/// the average over linear extensions of the list probability centred on
/// each extension, computed by the bitmask recursion with the extension
/// count returned in the same pass.
pub fn mallows_po_loglik(y: &RankList, h: &PartialOrder, theta: f64) -> Result<f64, ObsError> {
    if theta == 0.0 {
        // Dispersion zero is exactly uniform over the permutations.
        NoiseParams::Mallows { theta }.validate()?;
        check_list_against(h, y)?;
        LocalOrder::new(h, y.members())?;
        return Ok(-ln_factorial(y.len()));
    }
    let (log_f, count) = mallows_po_parts(y, h, theta)?;
    Ok(log_f - (count as f64).ln())
}

/// The weighted extension sum and the extension count, exposed for the
/// count side-channel checks.
pub fn mallows_po_parts(
    y: &RankList,
    h: &PartialOrder,
    theta: f64,
) -> Result<(f64, u128), ObsError> {
    NoiseParams::Mallows { theta }.validate()?;
    check_list_against(h, y)?;
    let lo = LocalOrder::new(h, y.members())?;
    let m = y.len();
    let log_psi = log_psi_table(m, theta);
    let mut factorials = vec![1u128; m + 1];
    for i in 1..=m {
        factorials[i] = factorials[i - 1] * i as u128;
    }
    let mut memo = MallowsMemo::new(m);
    Ok(mallows_f(
        &lo,
        &log_psi,
        theta,
        &mut memo,
        &factorials,
        lo.full_mask(),
    ))
}

/// Sequential draw from the Mallows distribution centred at `l`.
pub fn sample_mallows<R: Rng + ?Sized>(
    l: &RankList,
    theta: f64,
    rng: &mut R,
) -> Result<RankList, ObsError> {
    NoiseParams::Mallows { theta }.validate()?;
    let mut remaining: Vec<usize> = l.members().to_vec();
    let mut out = Vec::with_capacity(l.len());
    let q = (-theta).exp();
    while !remaining.is_empty() {
        let s = remaining.len();
        // P(rank r) proportional to q^r, r = 0..s-1.
        let total = if q == 1.0 {
            s as f64
        } else {
            (1.0 - q.powi(s as i32)) / (1.0 - q)
        };
        let mut u = rng.random::<f64>() * total;
        let mut r = 0usize;
        let mut w = 1.0;
        while r + 1 < s {
            if u < w {
                break;
            }
            u -= w;
            w *= q;
            r += 1;
        }
        out.push(remaining.remove(r));
    }
    Ok(RankList::new(out))
}

/// Sum of per-list log likelihoods, with the pointwise vector retained for
/// predictive-density summaries. Ties are collapsed to unordered first.
pub fn dataset_loglik(
    data: &ObservationSet,
    h: &TiedPartialOrder,
    params: &NoiseParams,
) -> Result<(f64, Vec<f64>), ObsError> {
    let strict = h.strict_part();
    dataset_loglik_strict(data, &strict, params)
}

pub fn dataset_loglik_strict(
    data: &ObservationSet,
    h: &PartialOrder,
    params: &NoiseParams,
) -> Result<(f64, Vec<f64>), ObsError> {
    params.validate()?;
    let mut pointwise = Vec::with_capacity(data.len());
    for y in data.lists() {
        pointwise.push(list_loglik(y, h, params)?);
    }
    Ok((pointwise.iter().sum(), pointwise))
}

/// One list against the strict order, dispatched by noise model.
pub fn list_loglik(
    y: &RankList,
    h: &PartialOrder,
    params: &NoiseParams,
) -> Result<f64, ObsError> {
    match *params {
        NoiseParams::NoiseFree => noisefree_loglik(y, h),
        NoiseParams::QueueJump { p } => qj_loglik(y, h, p),
        NoiseParams::Mallows { theta } => mallows_po_loglik(y, h, theta),
    }
}
