//! Partial orders (optionally with ties) stored as row-bitset relation
//! matrices, together with the order algebra used everywhere else: validation,
//! transitive closure/reduction, suborders, depth, intersection orders, tie
//! collapse/expansion and structural predicates.
//!
//! Actors are indexed `0..n` internally; user-facing formats are 1-based and
//! the translation happens in [`crate::io`].

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PosetError {
    #[error("relation matrix is not square ({rows} rows, row {bad} has {len} entries)")]
    NotSquare { rows: usize, bad: usize, len: usize },
    #[error("reflexive edge at actor {0}")]
    ReflexiveEdge(usize),
    #[error("transitivity violation: {0} > {1} and {1} > {2} but not {0} > {2}")]
    TransitivityViolation(usize, usize, usize),
    #[error("asymmetric tie between actors {0} and {1}")]
    AsymmetricTie(usize, usize),
    #[error("tied actors {0} and {1} have differing relations to other actors")]
    InconsistentTieBlock(usize, usize),
    #[error("cycle through actor {0}")]
    CycleDetected(usize),
    #[error("unknown actor label {0}")]
    UnknownLabel(usize),
    #[error("expected full-length lists over all {expected} actors, got length {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{0} actors exceeds the configured limit of {1}")]
    SizeLimitExceeded(usize, usize),
    #[error("more than {0} linear extensions")]
    TooManyExtensions(u64),
    #[error("start list is not a linear extension")]
    StartNotExtension,
    #[error("list is not a permutation of the actor set")]
    NotPermutation,
}

/// Square boolean relation stored as one bitset row per actor, one 64-bit
/// word stripe per 64 actors.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Relation {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Relation {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn from_matrix(matrix: &[Vec<bool>]) -> Result<Self, PosetError> {
        let n = matrix.len();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(PosetError::NotSquare {
                    rows: n,
                    bad: i,
                    len: row.len(),
                });
            }
        }
        let mut rel = Relation::new(n);
        for (i, row) in matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v {
                    rel.set(i, j, true);
                }
            }
        }
        Ok(rel)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let w = i * self.words + j / 64;
        if v {
            self.bits[w] |= 1 << (j % 64);
        } else {
            self.bits[w] &= !(1 << (j % 64));
        }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// OR row `src` into row `dst`; returns true if `dst` changed.
    fn union_row_into(&mut self, src: usize, dst: usize) -> bool {
        let mut changed = false;
        for w in 0..self.words {
            let s = self.bits[src * self.words + w];
            let d = &mut self.bits[dst * self.words + w];
            let new = *d | s;
            changed |= new != *d;
            *d = new;
        }
        changed
    }

    fn rows_equal_excluding(&self, a: usize, b: usize, exclude: &[usize]) -> bool {
        let mut ra: Vec<u64> = self.row(a).to_vec();
        let mut rb: Vec<u64> = self.row(b).to_vec();
        for &e in exclude {
            let w = e / 64;
            let m = !(1u64 << (e % 64));
            ra[w] &= m;
            rb[w] &= m;
        }
        ra == rb
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Relation(n={})", self.n)?;
        for i in 0..self.n {
            for j in 0..self.n {
                write!(f, "{}", if self.get(i, j) { '1' } else { '0' })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// A partition of `0..n` into disjoint nonempty blocks, canonicalized so that
/// blocks are sorted internally and ordered by least member.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.retain(|b| !b.is_empty());
        blocks.sort_by_key(|b| b[0]);
        let mut block_of = vec![usize::MAX; n];
        let mut seen = 0usize;
        for (c, b) in blocks.iter().enumerate() {
            for &i in b {
                assert!(i < n && block_of[i] == usize::MAX, "blocks must partition 0..n");
                block_of[i] = c;
                seen += 1;
            }
        }
        assert_eq!(seen, n, "blocks must cover 0..n");
        Partition { blocks, block_of }
    }

    pub fn singletons(n: usize) -> Self {
        Partition::new(n, (0..n).map(|i| vec![i]).collect())
    }

    pub fn from_block_of(block_of: &[usize]) -> Self {
        let c = block_of.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); c];
        for (i, &b) in block_of.iter().enumerate() {
            blocks[b].push(i);
        }
        Partition::new(block_of.len(), blocks)
    }

    pub fn n(&self) -> usize {
        self.block_of.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, actor: usize) -> usize {
        self.block_of[actor]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }
}

/// Strict partial order: irreflexive, antisymmetric and transitively closed.
/// The stored relation is always the full closure.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PartialOrder {
    rel: Relation,
}

impl fmt::Debug for PartialOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartialOrder(n={}, edges={:?})", self.n(), self.rel.edges())
    }
}

impl PartialOrder {
    /// Validates a relation matrix as-is. The matrix must already be
    /// transitively closed; use [`transitive_closure`] first when loading
    /// edge lists.
    pub fn from_matrix(matrix: &[Vec<bool>]) -> Result<Self, PosetError> {
        Self::from_relation(Relation::from_matrix(matrix)?)
    }

    pub fn from_relation(rel: Relation) -> Result<Self, PosetError> {
        let n = rel.n();
        for i in 0..n {
            if rel.get(i, i) {
                return Err(PosetError::ReflexiveEdge(i));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && rel.get(i, j) && rel.get(j, i) {
                    return Err(PosetError::AsymmetricTie(i, j));
                }
            }
        }
        check_transitive(&rel)?;
        Ok(PartialOrder { rel })
    }

    /// Builds the order generated by `edges` (closure applied).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, PosetError> {
        let mut rel = Relation::new(n);
        for &(i, j) in edges {
            if i >= n {
                return Err(PosetError::UnknownLabel(i));
            }
            if j >= n {
                return Err(PosetError::UnknownLabel(j));
            }
            rel.set(i, j, true);
        }
        let closed = transitive_closure(&rel)?;
        Self::from_relation(closed)
    }

    pub fn empty(n: usize) -> Self {
        PartialOrder {
            rel: Relation::new(n),
        }
    }

    /// Total order listing actors from highest to lowest status.
    pub fn total(order: &[usize]) -> Self {
        let n = order.len();
        let mut rel = Relation::new(n);
        for a in 0..n {
            for b in a + 1..n {
                rel.set(order[a], order[b], true);
            }
        }
        PartialOrder { rel }
    }

    pub fn n(&self) -> usize {
        self.rel.n()
    }

    #[inline]
    pub fn dominates(&self, i: usize, j: usize) -> bool {
        self.rel.get(i, j)
    }

    #[inline]
    pub fn incomparable(&self, i: usize, j: usize) -> bool {
        i != j && !self.rel.get(i, j) && !self.rel.get(j, i)
    }

    pub fn relation(&self) -> &Relation {
        &self.rel
    }

    /// All closure edges `(i, j)` with `i > j`.
    pub fn closure_edges(&self) -> Vec<(usize, usize)> {
        self.rel.edges()
    }

    pub fn num_edges(&self) -> usize {
        self.rel.edges().len()
    }

    /// The unique minimal edge set whose transitive closure is this order.
    pub fn transitive_reduction(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            'edge: for j in 0..n {
                if !self.rel.get(i, j) {
                    continue;
                }
                for k in 0..n {
                    if self.rel.get(i, k) && self.rel.get(k, j) {
                        continue 'edge;
                    }
                }
                out.push((i, j));
            }
        }
        out
    }

    /// Restriction to `labels`, re-indexed; the returned map sends new index
    /// to old label.
    pub fn suborder(&self, labels: &[usize]) -> Result<(PartialOrder, Vec<usize>), PosetError> {
        for &l in labels {
            if l >= self.n() {
                return Err(PosetError::UnknownLabel(l));
            }
        }
        let m = labels.len();
        let mut rel = Relation::new(m);
        for a in 0..m {
            for b in 0..m {
                if a != b && self.rel.get(labels[a], labels[b]) {
                    rel.set(a, b, true);
                }
            }
        }
        // Restriction preserves all three invariants.
        Ok((PartialOrder { rel }, labels.to_vec()))
    }

    /// Number of nodes on the longest chain.
    pub fn depth(&self) -> usize {
        let n = self.n();
        if n == 0 {
            return 0;
        }
        fn longest(memo: &mut [usize], rel: &Relation, i: usize) -> usize {
            if memo[i] != 0 {
                return memo[i];
            }
            let mut best = 1;
            for j in 0..rel.n() {
                if rel.get(i, j) {
                    best = best.max(1 + longest(memo, rel, j));
                }
            }
            memo[i] = best;
            best
        }
        let mut memo = vec![0usize; n];
        (0..n).map(|i| longest(&mut memo, &self.rel, i)).max().unwrap()
    }

    /// Actors not dominated by anyone.
    pub fn maximal_elements(&self) -> Vec<usize> {
        let n = self.n();
        (0..n)
            .filter(|&m| (0..n).all(|i| !self.rel.get(i, m)))
            .collect()
    }

    /// True iff `list` is a permutation of all actors in which no lesser
    /// actor precedes a greater one.
    pub fn is_linear_extension(&self, list: &RankList) -> bool {
        let n = self.n();
        if list.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &x in list.members() {
            if x >= n || seen[x] {
                return false;
            }
            seen[x] = true;
        }
        for a in 0..n {
            for b in a + 1..n {
                if self.rel.get(list.members()[b], list.members()[a]) {
                    return false;
                }
            }
        }
        true
    }

    /// No induced 4-element "N" pattern (a>c, b>c, b>d and nothing else).
    pub fn is_vsp(&self) -> bool {
        let n = self.n();
        // An induced N is found by locating its witness roles directly:
        // a > c, b > c, b > d, with a||b, a||d, c||d.
        for a in 0..n {
            for b in 0..n {
                if a == b || !self.incomparable(a, b) {
                    continue;
                }
                for c in 0..n {
                    if c == a || c == b || !self.rel.get(a, c) || !self.rel.get(b, c) {
                        continue;
                    }
                    for d in 0..n {
                        if d == a || d == b || d == c {
                            continue;
                        }
                        if self.rel.get(b, d)
                            && self.incomparable(a, d)
                            && self.incomparable(c, d)
                        {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// True iff incomparability is transitive, so the incomparability classes
    /// form totally ordered layers.
    pub fn is_bucket_order(&self) -> bool {
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if i == j || !self.incomparable(i, j) {
                    continue;
                }
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    if self.incomparable(j, k) && !self.incomparable(i, k) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn check_transitive(rel: &Relation) -> Result<(), PosetError> {
    let n = rel.n();
    for i in 0..n {
        for j in 0..n {
            if i == j || !rel.get(i, j) {
                continue;
            }
            for k in 0..n {
                if k != i && k != j && rel.get(j, k) && !rel.get(i, k) {
                    return Err(PosetError::TransitivityViolation(i, j, k));
                }
            }
        }
    }
    Ok(())
}

/// Smallest transitive superset of `rel`. Mutual pairs are treated as tie
/// classes: relations propagate through them and a strict cycle between
/// classes is an error.
pub fn transitive_closure(rel: &Relation) -> Result<Relation, PosetError> {
    let n = rel.n();
    for i in 0..n {
        if rel.get(i, i) {
            return Err(PosetError::ReflexiveEdge(i));
        }
    }

    // Union tie classes from mutual pairs.
    let mut class = (0..n).collect::<Vec<usize>>();
    fn find(class: &mut [usize], mut i: usize) -> usize {
        while class[i] != i {
            class[i] = class[class[i]];
            i = class[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if rel.get(i, j) && rel.get(j, i) {
                let (a, b) = (find(&mut class, i), find(&mut class, j));
                if a != b {
                    class[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let reps: Vec<usize> = (0..n).map(|i| find(&mut class, i)).collect();

    // Strict closure on the quotient (Warshall on class representatives).
    let mut closed = Relation::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rel.get(i, j) && reps[i] != reps[j] {
                closed.set(reps[i], reps[j], true);
            }
        }
    }
    for k in 0..n {
        if reps[k] != k {
            continue;
        }
        for i in 0..n {
            if reps[i] == i && closed.get(i, k) {
                closed.union_row_into(k, i);
            }
        }
    }
    for i in 0..n {
        if reps[i] == i && closed.get(i, i) {
            return Err(PosetError::CycleDetected(i));
        }
    }

    // Expand class representatives back to members and restore ties.
    let mut out = Relation::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && (reps[i] == reps[j] || closed.get(reps[i], reps[j])) {
                out.set(i, j, true);
            }
        }
    }
    Ok(out)
}

/// Partial order allowing tie classes, encoded as mutual 1s in the relation
/// matrix. Stored transitively closed.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TiedPartialOrder {
    rel: Relation,
}

impl fmt::Debug for TiedPartialOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TiedPartialOrder(n={}, strict={:?}, ties={:?})",
            self.n(),
            self.strict_edges(),
            self.tie_pairs()
        )
    }
}

impl TiedPartialOrder {
    pub fn from_matrix(matrix: &[Vec<bool>]) -> Result<Self, PosetError> {
        Self::from_relation(Relation::from_matrix(matrix)?)
    }

    pub fn from_relation(rel: Relation) -> Result<Self, PosetError> {
        let n = rel.n();
        for i in 0..n {
            if rel.get(i, i) {
                return Err(PosetError::ReflexiveEdge(i));
            }
        }
        // Tie relation must be an equivalence: mutual pairs close over shared
        // members.
        for i in 0..n {
            for j in 0..n {
                if i == j || !(rel.get(i, j) && rel.get(j, i)) {
                    continue;
                }
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    if rel.get(j, k) && rel.get(k, j) && !(rel.get(i, k) && rel.get(k, i)) {
                        return Err(PosetError::AsymmetricTie(i, k));
                    }
                }
            }
        }
        // Tied actors need identical relations against everyone else.
        for i in 0..n {
            for j in i + 1..n {
                if rel.get(i, j) && rel.get(j, i) && !rel.rows_equal_excluding(i, j, &[i, j]) {
                    return Err(PosetError::InconsistentTieBlock(i, j));
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if rel.get(i, j) && rel.get(j, i) {
                    for k in 0..n {
                        if k != i && k != j && rel.get(k, i) != rel.get(k, j) {
                            return Err(PosetError::InconsistentTieBlock(i, j));
                        }
                    }
                }
            }
        }
        let po = TiedPartialOrder { rel };
        // The quotient over tie classes must itself be a valid strict order.
        let (quotient, _) = po.collapse_ties();
        let _ = PartialOrder::from_relation(quotient.rel)?;
        Ok(po)
    }

    /// For relations that hold by construction (e.g. coordinatewise
    /// dominance of latent rows); callers must guarantee the invariants.
    pub(crate) fn from_relation_unchecked(rel: Relation) -> Self {
        TiedPartialOrder { rel }
    }

    /// Rebuilds the tied order from a quotient and the tie partition; inverse
    /// of [`TiedPartialOrder::collapse_ties`].
    pub fn expand(quotient: &PartialOrder, partition: &Partition) -> Self {
        let n = partition.n();
        let mut rel = Relation::new(n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (ci, cj) = (partition.block_of(i), partition.block_of(j));
                if ci == cj || quotient.dominates(ci, cj) {
                    rel.set(i, j, true);
                }
            }
        }
        TiedPartialOrder { rel }
    }

    pub fn from_strict(order: &PartialOrder) -> Self {
        TiedPartialOrder {
            rel: order.relation().clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.rel.n()
    }

    pub fn relation(&self) -> &Relation {
        &self.rel
    }

    #[inline]
    pub fn tied(&self, i: usize, j: usize) -> bool {
        i != j && self.rel.get(i, j) && self.rel.get(j, i)
    }

    #[inline]
    pub fn strictly_dominates(&self, i: usize, j: usize) -> bool {
        self.rel.get(i, j) && !self.rel.get(j, i)
    }

    pub fn strict_edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.strictly_dominates(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn tie_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.tied(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Drops ties, keeping strict dominance only. Ties become unordered
    /// pairs, which is how every observation model reads them.
    pub fn strict_part(&self) -> PartialOrder {
        let n = self.n();
        let mut rel = Relation::new(n);
        for i in 0..n {
            for j in 0..n {
                if self.strictly_dominates(i, j) {
                    rel.set(i, j, true);
                }
            }
        }
        PartialOrder { rel }
    }

    /// Tie classes as a partition plus the induced strict order on classes.
    pub fn collapse_ties(&self) -> (PartialOrder, Partition) {
        let n = self.n();
        let mut block_of = vec![usize::MAX; n];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            if block_of[i] != usize::MAX {
                continue;
            }
            let c = blocks.len();
            let mut block = vec![i];
            block_of[i] = c;
            for j in i + 1..n {
                if self.tied(i, j) {
                    block_of[j] = c;
                    block.push(j);
                }
            }
            blocks.push(block);
        }
        let partition = Partition::new(n, blocks);
        let c = partition.num_blocks();
        let mut rel = Relation::new(c);
        for (a, block) in partition.blocks().iter().enumerate() {
            for (b, other) in partition.blocks().iter().enumerate() {
                if a != b && self.strictly_dominates(block[0], other[0]) {
                    rel.set(a, b, true);
                }
            }
        }
        (PartialOrder { rel }, partition)
    }

    /// Depth counts each tie class once.
    pub fn depth(&self) -> usize {
        self.collapse_ties().0.depth()
    }
}

/// An ordered list of distinct actor labels, highest status first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankList(Vec<usize>);

impl RankList {
    pub fn new(members: Vec<usize>) -> Self {
        RankList(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position_of(&self, label: usize) -> Option<usize> {
        self.0.iter().position(|&x| x == label)
    }
}

impl From<Vec<usize>> for RankList {
    fn from(v: Vec<usize>) -> Self {
        RankList(v)
    }
}

/// The order containing exactly the pairwise relations common to all given
/// full-length lists.
pub fn intersection_order(lists: &[RankList]) -> Result<PartialOrder, PosetError> {
    let n = lists.first().map_or(0, |l| l.len());
    let mut pos = vec![vec![0usize; n]; lists.len()];
    for (k, list) in lists.iter().enumerate() {
        if list.len() != n {
            return Err(PosetError::LengthMismatch {
                expected: n,
                got: list.len(),
            });
        }
        let mut seen = vec![false; n];
        for (p, &x) in list.members().iter().enumerate() {
            if x >= n || seen[x] {
                return Err(PosetError::NotPermutation);
            }
            seen[x] = true;
            pos[k][x] = p;
        }
    }
    let mut rel = Relation::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && pos.iter().all(|p| p[i] < p[j]) {
                rel.set(i, j, true);
            }
        }
    }
    // An intersection of total orders is transitive by construction.
    Ok(PartialOrder { rel })
}

/// All labeled strict partial orders on `n` actors, by filtering every
/// irreflexive relation matrix. Only feasible for very small `n`.
pub fn enumerate_posets(n: usize) -> Result<Vec<PartialOrder>, PosetError> {
    const MAX: usize = 4;
    if n > MAX {
        return Err(PosetError::SizeLimitExceeded(n, MAX));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut out = Vec::new();
    for code in 0u32..1 << pairs.len() {
        let mut rel = Relation::new(n);
        for (b, &(i, j)) in pairs.iter().enumerate() {
            if code >> b & 1 == 1 {
                rel.set(i, j, true);
            }
        }
        if let Ok(po) = PartialOrder::from_relation(rel) {
            out.push(po);
        }
    }
    Ok(out)
}
