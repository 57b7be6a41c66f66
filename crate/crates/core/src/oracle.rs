//! Exhaustive antichain enumeration for small decomposition trees.
//!
//! Everything here is exponential in the number of strands and exists to
//! check the polynomial analyses against first principles: water marks are
//! evaluated straight from their definition as edge maxima plus
//! predecessor totals plus positive-sum suspended partner components.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mem::{Mem, ThresholdQuery};
use crate::spdag::{NodeId, NodeView, SpNode, SpTree};

/// Default leaf cap; `2^24` subsets is the most the oracle is meant to face.
pub const DEFAULT_CAP: usize = 24;
const MAX_CAP: usize = 64;

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    pub cap: usize,
    /// Treat a plain `Parallel(L, R)` as the group `[∅, L, R]` when
    /// deciding which components are non-critical.
    pub parallel_as_spawn: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, parallel_as_spawn: false }
    }
}

/// Which robustness predicate an antichain must satisfy.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Flavor {
    /// Every edge's own share (its maximum, the predecessors only it has,
    /// the companions only it induces) exceeds the gate.
    Robust,
    /// Removing any edge, or the edges of any non-critical spawned
    /// component, lowers the water mark by more than the gate.
    Stripped,
}

/// Set of strands given by their serial (left-to-right) leaf indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, PartialOrd, Ord)]
pub struct Antichain(pub u64);

impl Antichain {
    pub fn from_indices(indices: &[usize]) -> Self {
        Antichain(indices.iter().fold(0, |m, &i| m | 1 << i))
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        bits(self.0)
    }
}

fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (mask != 0).then(|| {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            i
        })
    })
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WaterMarkBreakdown {
    /// Edge maxima of the antichain plus totals of all its predecessors.
    pub w1: i64,
    /// Totals of companion components.
    pub w2: i64,
    pub total: i64,
    /// Companion components as node ids of [`Oracle::binary_tree`].
    pub companions: Vec<NodeId>,
    /// `W(A) - W(A \ {x})` for each member `x`, by leaf index.
    pub per_edge_local: BTreeMap<usize, i64>,
}

#[derive(Clone, Debug)]
struct Split {
    node: NodeId,
    sides: [u64; 2],
    totals: [i64; 2],
}

/// A spawned component and everything after it in its group.
#[derive(Clone, Copy, Debug)]
struct SpawnSlot {
    b: u64,
    after: u64,
}

/// Precomputed masks over a small tree.
#[derive(Clone, Debug)]
pub struct Oracle {
    binary: SpTree,
    leaf_nodes: Vec<NodeId>,
    t: Vec<i64>,
    m: Vec<i64>,
    pred: Vec<u64>,
    comparable: Vec<u64>,
    splits: Vec<Split>,
    slots: Vec<SpawnSlot>,
}

impl Oracle {
    pub fn new(tree: &SpTree) -> Result<Self> {
        Self::with_options(tree, OracleOptions::default())
    }

    pub fn with_options(tree: &SpTree, opts: OracleOptions) -> Result<Self> {
        let leaves = tree.leaves();
        let cap = opts.cap.min(MAX_CAP);
        if leaves.len() > cap {
            return Err(Error::CapExceeded { leaves: leaves.len(), cap });
        }
        let mut index = vec![usize::MAX; tree.len()];
        for (i, &id) in leaves.iter().enumerate() {
            index[id] = i;
        }

        // Spawn slots come from the original grouping.
        let mut slots = Vec::new();
        tree.fold::<u64, Error>(|id, v| {
            Ok(match v {
                NodeView::Leaf(_) => 1 << index[id],
                NodeView::Series(a, b) => a | b,
                NodeView::Parallel(a, b) => {
                    if opts.parallel_as_spawn {
                        slots.push(SpawnSlot { b: a, after: b });
                    }
                    a | b
                }
                NodeView::MultiSpawn(c) => {
                    let mut after = 0;
                    for i in (1..c.len()).rev() {
                        after |= c[i];
                        if i % 2 == 1 {
                            slots.push(SpawnSlot { b: c[i], after: after & !c[i] });
                        }
                    }
                    c.iter().fold(0, |m, x| m | x)
                }
            })
        })?;

        let binary = tree.desugar();
        let n = leaves.len();
        let mut t = vec![0; n];
        let mut m = vec![0; n];
        let mut leaf_nodes = vec![0; n];
        let mut mask = vec![0u64; binary.len()];
        let mut total = vec![0i64; binary.len()];
        let mut next = 0usize;
        // Leaf order of the desugared tree equals the original serial order.
        let mut serial = vec![usize::MAX; binary.len()];
        for (i, id) in binary.leaves().into_iter().enumerate() {
            serial[id] = i;
        }
        let mut splits = Vec::new();
        for (id, node) in binary.nodes().iter().enumerate() {
            match node {
                SpNode::Leaf(s) => {
                    let i = serial[id];
                    t[i] = s.t;
                    m[i] = s.m;
                    leaf_nodes[i] = leaves[i];
                    mask[id] = 1 << i;
                    total[id] = s.t;
                    next += 1;
                }
                SpNode::Series([a, b]) | SpNode::Parallel([a, b]) => {
                    mask[id] = mask[*a] | mask[*b];
                    total[id] = crate::mem::checked_add(total[*a], total[*b])?;
                    if matches!(node, SpNode::Parallel(_)) {
                        splits.push(Split { node: id, sides: [mask[*a], mask[*b]], totals: [total[*a], total[*b]] });
                    }
                }
                SpNode::MultiSpawn(_) => unreachable!("desugared"),
            }
        }
        debug_assert_eq!(next, n);

        // Predecessors flow top-down: the right side of a series node
        // inherits everything on its left.
        let mut inherited = vec![0u64; binary.len()];
        let mut pred = vec![0u64; n];
        for id in (0..binary.len()).rev() {
            match binary.node(id) {
                SpNode::Leaf(_) => pred[serial[id]] = inherited[id],
                SpNode::Series([a, b]) => {
                    inherited[*a] = inherited[id];
                    inherited[*b] = inherited[id] | mask[*a];
                }
                SpNode::Parallel([a, b]) => {
                    inherited[*a] = inherited[id];
                    inherited[*b] = inherited[id];
                }
                SpNode::MultiSpawn(_) => unreachable!("desugared"),
            }
        }
        let mut comparable = pred.clone();
        for (y, &below) in pred.iter().enumerate() {
            for x in bits(below) {
                comparable[x] |= 1 << y;
            }
        }

        Ok(Oracle { binary, leaf_nodes, t, m, pred, comparable, splits, slots })
    }

    pub fn leaf_count(&self) -> usize {
        self.t.len()
    }

    /// The desugared tree that companion ids refer to.
    pub fn binary_tree(&self) -> &SpTree {
        &self.binary
    }

    /// Node of the original tree holding leaf `i`.
    pub fn leaf_node(&self, i: usize) -> NodeId {
        self.leaf_nodes[i]
    }

    pub fn is_antichain(&self, a: Antichain) -> bool {
        let n = self.leaf_count();
        (n == 64 || a.0 >> n == 0) && bits(a.0).all(|x| self.comparable[x] & a.0 == 0)
    }

    /// All antichains with at most `max_size` members, the empty one first.
    pub fn antichains(&self, max_size: Option<usize>) -> Antichains<'_> {
        Antichains { oracle: self, max: max_size.unwrap_or(usize::MAX), stack: Vec::new(), started: false }
    }

    fn predecessors(&self, a: u64) -> u64 {
        bits(a).fold(0, |acc, x| acc | self.pred[x])
    }

    fn sum_t(&self, set: u64) -> i128 {
        bits(set).map(|e| self.t[e] as i128).sum()
    }

    fn companion_sum(&self, a: u64, mut on_companion: impl FnMut(NodeId)) -> i128 {
        let mut w2 = 0i128;
        for s in &self.splits {
            let hit = [s.sides[0] & a != 0, s.sides[1] & a != 0];
            for side in 0..2 {
                if hit[1 - side] && !hit[side] && s.totals[side] > 0 {
                    w2 += s.totals[side] as i128;
                    on_companion(self.binary.node(s.node).children()[side]);
                }
            }
        }
        w2
    }

    /// Water mark of `a`; the empty set scores 0.
    pub(crate) fn wm(&self, a: u64) -> i128 {
        if a == 0 {
            return 0;
        }
        let w1 = bits(a).map(|x| self.m[x] as i128).sum::<i128>() + self.sum_t(self.predecessors(a));
        w1 + self.companion_sum(a, |_| {})
    }

    pub fn water_mark(&self, a: Antichain) -> Result<WaterMarkBreakdown> {
        if !self.is_antichain(a) {
            return Err(Error::InvalidAntichain(format!("{:?} has comparable or unknown members", a.indices().collect::<Vec<_>>())));
        }
        let narrow = |v: i128| i64::try_from(v).map_err(|_| Error::Overflow);
        let mut companions = Vec::new();
        let (w1, w2) = if a.is_empty() {
            (0, 0)
        } else {
            let w1 = bits(a.0).map(|x| self.m[x] as i128).sum::<i128>() + self.sum_t(self.predecessors(a.0));
            (w1, self.companion_sum(a.0, |c| companions.push(c)))
        };
        let total = w1 + w2;
        let mut per_edge_local = BTreeMap::new();
        for x in a.indices() {
            per_edge_local.insert(x, narrow(total - self.wm(a.0 & !(1 << x)))?);
        }
        Ok(WaterMarkBreakdown { w1: narrow(w1)?, w2: narrow(w2)?, total: narrow(total)?, companions, per_edge_local })
    }

    /// `H[q]` for `q = 1..=p`, index 0 of the result holding `H[1]`.
    pub fn hwm(&self, p: usize) -> Result<Vec<i64>> {
        let mut best = vec![0i128; p + 1];
        for a in self.antichains(Some(p)) {
            let k = a.len();
            best[k] = best[k].max(self.wm(a.0));
        }
        let mut out = Vec::with_capacity(p);
        let mut run = best[0];
        for v in &best[1..] {
            run = run.max(*v);
            out.push(i64::try_from(run).map_err(|_| Error::Overflow)?);
        }
        Ok(out)
    }

    /// Share of `x` under the robust predicate: its own maximum, the
    /// predecessors no other member has, and the companions whose
    /// partner side holds `x` alone.
    fn own_share(&self, a: u64, x: usize) -> i128 {
        let others = self.predecessors(a & !(1 << x));
        let mut share = self.m[x] as i128 + self.sum_t(self.pred[x] & !others);
        for s in &self.splits {
            for side in 0..2 {
                let partner = s.sides[1 - side] & a;
                if s.sides[side] & a == 0 && partner == 1 << x && s.totals[side] > 0 {
                    share += s.totals[side] as i128;
                }
            }
        }
        share
    }

    fn qualifies(&self, a: u64, q: &ThresholdQuery, flavor: Flavor) -> bool {
        let gate = |v: i128| match i64::try_from(v) {
            Ok(v) => q.exceeds_gate(v),
            Err(_) => v > 0,
        };
        match flavor {
            Flavor::Robust => bits(a).all(|x| gate(self.own_share(a, x))),
            Flavor::Stripped => {
                let w = self.wm(a);
                bits(a).all(|x| gate(w - self.wm(a & !(1 << x))))
                    && self
                        .slots
                        .iter()
                        .filter(|s| s.b & a != 0 && s.after & a != 0)
                        .all(|s| gate(w - self.wm(a & !s.b)))
            }
        }
    }

    /// Best water mark over nonempty antichains passing the flavor's
    /// predicate, or `NegInf` when none does.
    pub fn best_robust(&self, q: &ThresholdQuery, flavor: Flavor, max_size: Option<usize>) -> Result<Mem> {
        let mut best: Option<i128> = None;
        for a in self.antichains(max_size).filter(|a| !a.is_empty()) {
            if self.qualifies(a.0, q, flavor) {
                let w = self.wm(a.0);
                best = Some(best.map_or(w, |b| b.max(w)));
            }
        }
        best.map(|b| i64::try_from(b).map(Mem::Bytes).map_err(|_| Error::Overflow)).unwrap_or(Ok(Mem::NegInf))
    }

    /// [`best_robust`](Self::best_robust) with the empty antichain
    /// counted as qualifying at 0.
    pub fn robust_hwm(&self, q: &ThresholdQuery, flavor: Flavor, max_size: Option<usize>) -> Result<i64> {
        Ok(self.best_robust(q, flavor, max_size)?.or_zero().max(0))
    }

    /// First antichain whose downset has a negative total, if any.
    ///
    /// Every downset is the closure of its maximal elements, which form an
    /// antichain, so walking antichains covers all downsets.
    pub fn negative_downset(&self) -> Option<Antichain> {
        self.antichains(None).find(|a| self.sum_t(a.0 | self.predecessors(a.0)) < 0)
    }
}

/// Depth-first antichain enumeration over increasing leaf indices.
pub struct Antichains<'a> {
    oracle: &'a Oracle,
    max: usize,
    /// (members so far, next candidate leaf)
    stack: Vec<(u64, usize)>,
    started: bool,
}

impl Iterator for Antichains<'_> {
    type Item = Antichain;

    fn next(&mut self) -> Option<Antichain> {
        if !self.started {
            self.started = true;
            self.stack.push((0, 0));
            return Some(Antichain(0));
        }
        let n = self.oracle.leaf_count();
        while let Some(top) = self.stack.last_mut() {
            let (mask, from) = *top;
            let room = (mask.count_ones() as usize) < self.max;
            let found = if room {
                (from..n).find(|&i| self.oracle.comparable[i] & mask == 0)
            } else {
                None
            };
            match found {
                Some(i) => {
                    top.1 = i + 1;
                    let grown = mask | 1 << i;
                    self.stack.push((grown, i + 1));
                    return Some(Antichain(grown));
                }
                None => {
                    self.stack.pop();
                }
            }
        }
        None
    }
}

/// All antichains of `tree` with at most `max_size` members.
pub fn enumerate_antichains(tree: &SpTree, max_size: Option<usize>) -> Result<Vec<Antichain>> {
    let o = Oracle::new(tree)?;
    Ok(o.antichains(max_size).collect())
}

pub fn water_mark(tree: &SpTree, a: Antichain) -> Result<WaterMarkBreakdown> {
    Oracle::new(tree)?.water_mark(a)
}

/// `H[1..=p]` by exhaustive search.
pub fn brute_hwm(tree: &SpTree, p: usize) -> Result<Vec<i64>> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    Oracle::new(tree)?.hwm(p)
}

/// Best water mark over antichains satisfying `flavor` at the query's
/// gate, floored at 0.
pub fn brute_robust_hwm(tree: &SpTree, q: &ThresholdQuery, flavor: Flavor, max_size: Option<usize>) -> Result<i64> {
    Oracle::new(tree)?.robust_hwm(q, flavor, max_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spdag::build_spdag;
    use crate::trace::{gen_memory_explosion, RandomSpConfig};
    use proptest::prelude::*;

    fn l(t: i64, m: i64) -> SpTree {
        SpTree::leaf(t, m)
    }

    fn pair() -> SpTree {
        SpTree::parallel(l(2, 3), l(-1, 4))
    }

    #[test]
    fn parallel_pair_breakdowns() {
        let o = Oracle::new(&pair()).unwrap();
        let both = o.water_mark(Antichain::from_indices(&[0, 1])).unwrap();
        assert_eq!((both.w1, both.w2, both.total), (7, 0, 7));
        let e2 = o.water_mark(Antichain::from_indices(&[1])).unwrap();
        assert_eq!((e2.w1, e2.w2, e2.total), (4, 2, 6));
        assert_eq!(e2.companions.len(), 1);
        let e1 = o.water_mark(Antichain::from_indices(&[0])).unwrap();
        assert_eq!((e1.w1, e1.w2, e1.total), (3, 0, 3));
        assert_eq!(both.per_edge_local, BTreeMap::from([(0, 1), (1, 4)]));
    }

    #[test]
    fn rejects_comparable_members() {
        let t = SpTree::series(l(1, 1), l(1, 1));
        let o = Oracle::new(&t).unwrap();
        assert!(o.water_mark(Antichain::from_indices(&[0, 1])).is_err());
        assert!(o.water_mark(Antichain::from_indices(&[5])).is_err());
    }

    #[test]
    fn hwm_examples() {
        assert_eq!(brute_hwm(&pair(), 2).unwrap(), [6, 7]);
        let me3 = build_spdag(&gen_memory_explosion(3).unwrap()).unwrap();
        assert_eq!(brute_hwm(&me3, 3).unwrap(), [3, 3, 3]);
        assert_eq!(brute_hwm(&l(5, 7), 4).unwrap(), [7, 7, 7, 7]);
    }

    #[test]
    fn memory_explosion_is_n() {
        for n in 1..=8 {
            let t = build_spdag(&gen_memory_explosion(n).unwrap()).unwrap();
            for p in [1, 2, 5] {
                assert!(brute_hwm(&t, p).unwrap().iter().all(|&h| h == n as i64), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn enumeration_counts() {
        // Three mutually parallel strands: all 8 subsets.
        let t = SpTree::parallel(l(0, 0), SpTree::parallel(l(0, 0), l(0, 0)));
        assert_eq!(enumerate_antichains(&t, None).unwrap().len(), 8);
        assert_eq!(enumerate_antichains(&t, Some(1)).unwrap().len(), 4);
        // A chain has only singletons.
        let c = SpTree::series(l(0, 0), SpTree::series(l(0, 0), l(0, 0)));
        assert_eq!(enumerate_antichains(&c, None).unwrap().len(), 4);
    }

    #[test]
    fn cap_enforced() {
        let mut t = l(1, 1);
        for _ in 0..24 {
            t = SpTree::parallel(t, l(1, 1));
        }
        assert!(matches!(Oracle::new(&t), Err(Error::CapExceeded { leaves: 25, cap: 24 })));
    }

    #[test]
    fn robust_extremes() {
        let q0 = ThresholdQuery::new(0, 1).unwrap();
        let t = pair();
        for f in [Flavor::Robust, Flavor::Stripped] {
            assert_eq!(brute_robust_hwm(&t, &q0, f, None).unwrap(), 7);
            let huge = ThresholdQuery::new(1000, 1).unwrap();
            assert_eq!(brute_robust_hwm(&t, &huge, f, None).unwrap(), 0);
        }
    }

    #[test]
    fn robust_pair_at_gate_four() {
        // Gate M/2p = 4: {e1,e2} fails (e1 adds only 1); {e2} scores 6 > 4.
        let q = ThresholdQuery::new(8, 1).unwrap();
        let t = pair();
        assert_eq!(brute_robust_hwm(&t, &q, Flavor::Stripped, None).unwrap(), 6);
        assert_eq!(brute_robust_hwm(&t, &q, Flavor::Robust, None).unwrap(), 6);
    }

    #[test]
    fn desugaring_preserves_hwm() {
        let ms = SpTree::multi_spawn(vec![l(1, 2), l(3, 3), l(-1, 1), l(2, 5), l(0, 4)]);
        assert_eq!(brute_hwm(&ms, 4).unwrap(), brute_hwm(&ms.desugar(), 4).unwrap());
    }

    fn small_trace(seed: u64) -> SpTree {
        let trace = RandomSpConfig::new(seed, 5, 3, 40).with_max_strands(14).generate();
        build_spdag(&trace).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hwm_monotone_and_saturating(seed in any::<u64>()) {
            let t = small_trace(seed);
            let o = Oracle::new(&t).unwrap();
            let h = o.hwm(16).unwrap();
            prop_assert!(h.windows(2).all(|w| w[0] <= w[1]));
            let widest = o.antichains(None).map(|a| a.len()).max().unwrap();
            prop_assert!(h[widest.max(1) - 1..].iter().all(|&v| v == h[15]));
        }

        #[test]
        fn hwm_invariant_under_desugaring(seed in any::<u64>()) {
            let t = small_trace(seed);
            prop_assert_eq!(brute_hwm(&t, 4).unwrap(), brute_hwm(&t.desugar(), 4).unwrap());
        }

        #[test]
        fn generated_downsets_are_nonnegative(seed in any::<u64>()) {
            let t = small_trace(seed);
            prop_assert_eq!(Oracle::new(&t).unwrap().negative_downset(), None);
        }

        #[test]
        fn stripped_bound_below_hwm(seed in any::<u64>(), m in 0u64..200, p in 1u64..5) {
            let t = small_trace(seed);
            let o = Oracle::new(&t).unwrap();
            let q = ThresholdQuery::new(m, p).unwrap();
            let h = o.hwm(p as usize).unwrap()[p as usize - 1];
            let s = o.robust_hwm(&q, Flavor::Stripped, Some(p as usize)).unwrap();
            // s >= h - M/2, compared without division.
            prop_assert!(2 * (s as i128) >= 2 * (h as i128) - m as i128);
        }

        #[test]
        fn zero_threshold_recovers_unbounded_hwm(seed in any::<u64>()) {
            let t = small_trace(seed);
            let o = Oracle::new(&t).unwrap();
            let q = ThresholdQuery::new(0, 1).unwrap();
            let h = *o.hwm(o.leaf_count()).unwrap().last().unwrap();
            prop_assert_eq!(o.robust_hwm(&q, Flavor::Stripped, None).unwrap(), h);
            prop_assert_eq!(o.robust_hwm(&q, Flavor::Robust, None).unwrap(), h);
        }
    }
}
