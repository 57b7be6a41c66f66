//! Threshold test: is `H_p` above `M/2`, or at most `M`?
//!
//! Both analyses keep a constant-size summary per component, so their work
//! is linear in the trace and does not depend on `p`. [`approx_offline`]
//! evaluates a decomposition tree; [`approx_online`] streams a trace with
//! one constant-size record per open frame.

mod component;
mod stripped;

pub use component::{
    approx_parallel, approx_series, classify_b_component, natural_peak, ActiveRule, ApproxComponentState, BClass,
};
pub use stripped::StrippedOnlineState;

use crate::error::Result;
use crate::mem::ThresholdQuery;
use crate::spdag::{
    FoldStats, Folder, NodeView, SpTree, StrandSummary, StreamAlgebra, StreamStats, StreamingAnalyzer,
};
use crate::trace::TraceEventSeq;

/// Answer of the threshold test.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ApproxOutcome {
    /// `true`: `H_p > M/2` is guaranteed. `false`: `H_p <= M` is guaranteed.
    pub answer: bool,
    /// Best qualifying water mark found; advisory only.
    pub h: i64,
    pub state: ApproxComponentState,
    /// Constant-time primitive steps performed.
    pub ops: u64,
}

impl ApproxOutcome {
    fn new(state: ApproxComponentState, q: &ThresholdQuery, ops: u64) -> Self {
        let h = state.h(q);
        Self { answer: q.exceeds_half(h), h, state, ops }
    }
}

/// Tree evaluation with multi-spawn groups desugared right to left.
pub fn approx_offline(tree: &SpTree, q: &ThresholdQuery) -> Result<ApproxOutcome> {
    let mut ops = 0u64;
    let state = tree.fold(|_, v| {
        ops += 1;
        match v {
            NodeView::Leaf(s) => Ok(ApproxComponentState::leaf(s.t, s.m)),
            NodeView::Series(a, b) => approx_series(&a, &b),
            NodeView::Parallel(a, b) => approx_parallel(&a, &b, q),
            NodeView::MultiSpawn(mut c) => {
                let mut acc = c.pop().expect("nonempty group");
                while let (Some(b), Some(a)) = (c.pop(), c.pop()) {
                    acc = approx_series(&a, &approx_parallel(&b, &acc, q)?)?;
                    ops += 2;
                }
                Ok(acc)
            }
        }
    })?;
    Ok(ApproxOutcome::new(state, q, ops))
}

/// Tree evaluation with multi-spawn groups run through
/// [`StrippedOnlineState`], as the streaming analysis does. A plain
/// `Parallel(L, R)` is combined as the group `[∅, L, R]` when
/// `parallel_as_spawn` is set and by [`approx_parallel`] otherwise.
pub fn approx_grouped(tree: &SpTree, q: &ThresholdQuery, rule: ActiveRule, parallel_as_spawn: bool) -> Result<ApproxOutcome> {
    let mut ops = 0u64;
    let state = tree.fold(|_, v| {
        ops += 1;
        match v {
            NodeView::Leaf(s) => Ok(ApproxComponentState::leaf(s.t, s.m)),
            NodeView::Series(a, b) => approx_series(&a, &b),
            NodeView::Parallel(a, b) if parallel_as_spawn => {
                let mut g = StrippedOnlineState::new();
                g.update_a(&ApproxComponentState::empty(), q)?;
                g.update_b(&a, q, rule)?;
                g.update_a(&b, q)?;
                g.finalize()
            }
            NodeView::Parallel(a, b) => approx_parallel(&a, &b, q),
            NodeView::MultiSpawn(c) => {
                let mut g = StrippedOnlineState::new();
                for (i, x) in c.iter().enumerate() {
                    ops += 1;
                    if i % 2 == 0 {
                        g.update_a(x, q)?;
                    } else {
                        g.update_b(x, q, rule)?;
                    }
                }
                g.finalize()
            }
        }
    })?;
    Ok(ApproxOutcome::new(state, q, ops))
}

/// Streaming algebra behind [`approx_online`].
#[derive(Debug)]
pub struct ApproxAlgebra {
    q: ThresholdQuery,
    rule: ActiveRule,
    pub ops: u64,
}

impl ApproxAlgebra {
    pub fn new(q: ThresholdQuery, rule: ActiveRule) -> Self {
        Self { q, rule, ops: 0 }
    }
}

impl StreamAlgebra for ApproxAlgebra {
    type Component = ApproxComponentState;
    type Group = StrippedOnlineState;

    fn leaf(&mut self, s: &StrandSummary) -> Result<ApproxComponentState> {
        self.ops += 1;
        Ok(ApproxComponentState::leaf(s.t, s.m))
    }

    fn series(&mut self, first: ApproxComponentState, second: ApproxComponentState) -> Result<ApproxComponentState> {
        self.ops += 1;
        approx_series(&first, &second)
    }

    fn open(&mut self) -> StrippedOnlineState {
        self.ops += 1;
        StrippedOnlineState::new()
    }

    fn push_a(&mut self, g: &mut StrippedOnlineState, a: ApproxComponentState) -> Result<()> {
        self.ops += 1;
        g.update_a(&a, &self.q)
    }

    fn push_b(&mut self, g: &mut StrippedOnlineState, b: ApproxComponentState) -> Result<()> {
        self.ops += 1;
        g.update_b(&b, &self.q, self.rule)
    }

    fn close(&mut self, g: StrippedOnlineState) -> Result<ApproxComponentState> {
        self.ops += 1;
        g.finalize()
    }

    fn component_cells(_: &ApproxComponentState) -> usize {
        3
    }

    fn group_cells(_: &StrippedOnlineState) -> usize {
        8
    }
}

/// Streaming result with the space figures of the run.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ApproxOnline {
    pub outcome: ApproxOutcome,
    pub stream: StreamStats,
    pub fold: FoldStats,
}

pub fn approx_online(trace: &TraceEventSeq, q: &ThresholdQuery) -> Result<ApproxOnline> {
    approx_online_with(trace, q, ActiveRule::default())
}

pub fn approx_online_with(trace: &TraceEventSeq, q: &ThresholdQuery, rule: ActiveRule) -> Result<ApproxOnline> {
    let mut folder = Folder::new(StreamingAnalyzer::new(ApproxAlgebra::new(*q, rule)));
    for e in &trace.events {
        folder.feed(e)?;
    }
    let (out, fold) = folder.finish()?;
    Ok(approx_online_finish(out, q, fold))
}

/// Finish a caller-driven streaming run.
pub fn approx_online_finish(
    out: (ApproxComponentState, ApproxAlgebra, StreamStats),
    q: &ThresholdQuery,
    fold: FoldStats,
) -> ApproxOnline {
    let (state, alg, stream) = out;
    ApproxOnline { outcome: ApproxOutcome::new(state, q, alg.ops), stream, fold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_hwm, Flavor, Oracle};
    use crate::spdag::build_spdag;
    use crate::trace::{gen_memory_explosion, RandomSpConfig, SpawnShape};
    use proptest::prelude::*;

    fn q(m: u64, p: u64) -> ThresholdQuery {
        ThresholdQuery::new(m, p).unwrap()
    }

    fn pair() -> SpTree {
        SpTree::parallel(SpTree::leaf(2, 3), SpTree::leaf(-1, 4))
    }

    #[test]
    fn forced_answers_on_pair() {
        assert!(!approx_offline(&pair(), &q(20, 2)).unwrap().answer);
        assert!(approx_offline(&pair(), &q(6, 2)).unwrap().answer);
        let neutral = SpTree::leaf(0, 0);
        let out = approx_offline(&neutral, &q(5, 1)).unwrap();
        assert_eq!((out.answer, out.h), (false, 0));
    }

    #[test]
    fn memory_explosion_answers() {
        for n in [3usize, 10, 100] {
            let t = gen_memory_explosion(n).unwrap();
            for p in [1, 8, 1000] {
                assert!(!approx_online(&t, &q(4 * n as u64, p)).unwrap().outcome.answer);
                assert!(approx_online(&t, &q(n as u64 - 1, p)).unwrap().outcome.answer);
            }
        }
        let t = gen_memory_explosion(3).unwrap();
        let tree = build_spdag(&t).unwrap();
        let off = approx_grouped(&tree, &q(2, 1), ActiveRule::AtLeast, false).unwrap();
        assert_eq!(approx_online(&t, &q(2, 1)).unwrap().outcome.state, off.state);
    }

    #[test]
    fn zero_threshold_answers_one_when_memory_used() {
        let t = gen_memory_explosion(2).unwrap();
        assert!(approx_online(&t, &q(0, 7)).unwrap().outcome.answer);
    }

    #[test]
    fn operation_count_ignores_p() {
        let t = gen_memory_explosion(500).unwrap();
        let a = approx_online(&t, &q(100, 2)).unwrap();
        let b = approx_online(&t, &q(100, 4096)).unwrap();
        assert_eq!(a.outcome.ops, b.outcome.ops);
        assert!(a.stream.peak_cells <= 11 * 500 + 3);
    }

    fn small(seed: u64) -> (TraceEventSeq, SpTree) {
        let shape = [SpawnShape::Flat, SpawnShape::Balanced, SpawnShape::Mixed][(seed % 3) as usize];
        let trace = RandomSpConfig::new(seed, 5, 4, 32).with_max_strands(16).with_shape(shape).generate();
        let tree = build_spdag(&trace).unwrap();
        (trace, tree)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn contract_holds(seed in any::<u64>(), p in 1u64..5, frac in 0u32..=200) {
            let (trace, tree) = small(seed);
            let h = *brute_hwm(&tree, p as usize).unwrap().last().unwrap();
            let hinf = *brute_hwm(&tree, tree.leaf_count()).unwrap().last().unwrap();
            let m = (2 * hinf.max(1) as u64) * frac as u64 / 200;
            let query = q(m, p);
            for ans in [approx_offline(&tree, &query).unwrap().answer, approx_online(&trace, &query).unwrap().outcome.answer] {
                if ans {
                    prop_assert!(2 * h as i128 > m as i128);
                } else {
                    prop_assert!(h as i128 <= m as i128);
                }
            }
        }

        #[test]
        fn offline_matches_robust_oracle(seed in any::<u64>(), p in 1u64..5, m in 0u64..120) {
            let (_, tree) = small(seed);
            let query = q(m, p);
            let o = Oracle::new(&tree).unwrap();
            prop_assert_eq!(approx_offline(&tree, &query).unwrap().h, o.robust_hwm(&query, Flavor::Robust, None).unwrap());
        }

        #[test]
        fn grouped_matches_online(seed in any::<u64>(), p in 1u64..5, m in 0u64..120) {
            let (trace, tree) = small(seed);
            let query = q(m, p);
            let off = approx_grouped(&tree, &query, ActiveRule::default(), false).unwrap();
            prop_assert_eq!(approx_online(&trace, &query).unwrap().outcome.state, off.state);
        }

        #[test]
        fn online_matches_stripped_oracle_without_companions(seed in any::<u64>(), p in 1u64..5, m in 0u64..120) {
            let tree = without_gains(&small(seed).1);
            let query = q(m, p);
            let o = Oracle::new(&tree).unwrap();
            let want = o.robust_hwm(&query, Flavor::Stripped, None).unwrap();
            prop_assert_eq!(approx_grouped(&tree, &query, ActiveRule::Strict, false).unwrap().h, want, "tree {}", tree);
        }

        #[test]
        fn online_never_below_stripped_oracle(seed in any::<u64>(), p in 1u64..5, m in 0u64..120) {
            let (trace, tree) = small(seed);
            let query = q(m, p);
            let o = Oracle::new(&tree).unwrap();
            let want = o.robust_hwm(&query, Flavor::Stripped, None).unwrap();
            prop_assert!(approx_online(&trace, &query).unwrap().outcome.h >= want, "tree {}", tree);
        }
    }

    /// Same shape with every strand total clamped to at most 0, so no
    /// component is ever a companion.
    fn without_gains(tree: &SpTree) -> SpTree {
        tree.fold::<SpTree, crate::Error>(|_, v| {
            Ok(match v {
                NodeView::Leaf(s) => SpTree::leaf(s.t.min(0), s.m),
                NodeView::Series(a, b) => SpTree::series(a, b),
                NodeView::Parallel(a, b) => SpTree::parallel(a, b),
                NodeView::MultiSpawn(c) => SpTree::multi_spawn(c),
            })
        })
        .unwrap()
    }

    #[test]
    fn single_continuation_edge_with_positive_end() {
        // {b1, a1} scores 11, but dropping a1 turns it into a companion
        // worth 2, so its marginal share is only 3 = M/2p.
        let tree = SpTree::series(
            SpTree::multi_spawn(vec![SpTree::leaf(0, 0), SpTree::leaf(0, 6), SpTree::leaf(2, 5)]),
            SpTree::leaf(-1, 0),
        );
        let query = q(6, 1);
        let o = Oracle::new(&tree).unwrap();
        assert_eq!(o.robust_hwm(&query, Flavor::Stripped, None).unwrap(), 8);
        assert_eq!(approx_grouped(&tree, &query, ActiveRule::Strict, false).unwrap().h, 11);
    }

    #[test]
    fn negative_carry_is_not_floored() {
        let l = SpTree::leaf;
        let tree = SpTree::series(
            SpTree::multi_spawn(vec![l(-16, 0), l(0, 15), l(0, 0), l(0, 6), l(0, 26)]),
            l(-19, 0),
        );
        let query = q(0, 1);
        let got = approx_grouped(&tree, &query, ActiveRule::Strict, false).unwrap();
        assert_eq!(got.state.maxrobust, crate::Mem::Bytes(31));
        assert_eq!(Oracle::new(&tree).unwrap().robust_hwm(&query, Flavor::Stripped, None).unwrap(), 31);
    }
}
