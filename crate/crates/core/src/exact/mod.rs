//! Exact `H[1..=p]` in `O(|E| p)` work.
//!
//! [`exact_offline`] evaluates a decomposition tree bottom-up;
//! [`exact_online`] streams a trace and keeps one multi-spawn state per
//! open frame.

mod multispawn;
mod profile;

pub use multispawn::MultiSpawnExactState;
pub use profile::{combine_parallel, combine_series, CapacityProfile, CellCounter};

use crate::error::{Error, Result};
use crate::spdag::{
    fold_trace, FoldStats, Folder, NodeView, SpTree, StrandSummary, StreamAlgebra, StreamStats, StreamingAnalyzer,
};
use crate::trace::TraceEventSeq;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactResult {
    pub profile: CapacityProfile,
    /// `hwm[q - 1] = H[q]`.
    pub hwm: Vec<i64>,
    pub work: CellCounter,
}

/// Streaming result with the space figures of the run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactOnline {
    pub result: ExactResult,
    pub stream: StreamStats,
    pub fold: FoldStats,
}

fn check_p(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    Ok(())
}

/// Multi-spawn groups are desugared right to left as they are met.
pub fn exact_offline(tree: &SpTree, p: usize) -> Result<ExactResult> {
    check_p(p)?;
    let mut work = CellCounter::default();
    let profile = tree.fold(|_, v| match v {
        NodeView::Leaf(s) => Ok(CapacityProfile::leaf(p, s.t, s.m)),
        NodeView::Series(a, b) => combine_series(&a, &b, &mut work),
        NodeView::Parallel(a, b) => combine_parallel(&a, &b, &mut work),
        NodeView::MultiSpawn(mut c) => {
            let mut acc = c.pop().expect("nonempty group");
            while let (Some(b), Some(a)) = (c.pop(), c.pop()) {
                acc = combine_parallel(&b, &acc, &mut work)?;
                acc = combine_series(&a, &acc, &mut work)?;
            }
            Ok(acc)
        }
    })?;
    let hwm = profile.hwm();
    Ok(ExactResult { profile, hwm, work })
}

/// Like [`exact_offline`], but multi-spawn nodes go through
/// [`MultiSpawnExactState`] exactly as the streaming analyzer would.
pub fn exact_grouped(tree: &SpTree, p: usize) -> Result<ExactResult> {
    check_p(p)?;
    let mut work = CellCounter::default();
    let profile = tree.fold(|_, v| match v {
        NodeView::Leaf(s) => Ok(CapacityProfile::leaf(p, s.t, s.m)),
        NodeView::Series(a, b) => combine_series(&a, &b, &mut work),
        NodeView::Parallel(a, b) => combine_parallel(&a, &b, &mut work),
        NodeView::MultiSpawn(c) => {
            let mut state = MultiSpawnExactState::new(p);
            for (i, r) in c.iter().enumerate() {
                if i % 2 == 0 {
                    state.update_a(r, &mut work)?;
                } else {
                    state.update_b(r, &mut work)?;
                }
            }
            state.finalize(&mut work)
        }
    })?;
    let hwm = profile.hwm();
    Ok(ExactResult { profile, hwm, work })
}

/// Streaming algebra behind [`exact_online`].
#[derive(Debug)]
pub struct ExactAlgebra {
    p: usize,
    pub work: CellCounter,
}

impl ExactAlgebra {
    pub fn new(p: usize) -> Result<Self> {
        check_p(p)?;
        Ok(Self { p, work: CellCounter::default() })
    }
}

impl StreamAlgebra for ExactAlgebra {
    type Component = CapacityProfile;
    type Group = MultiSpawnExactState;

    fn leaf(&mut self, s: &StrandSummary) -> Result<CapacityProfile> {
        self.work.cells += 2;
        Ok(CapacityProfile::leaf(self.p, s.t, s.m))
    }

    fn series(&mut self, first: CapacityProfile, second: CapacityProfile) -> Result<CapacityProfile> {
        combine_series(&first, &second, &mut self.work)
    }

    fn open(&mut self) -> MultiSpawnExactState {
        MultiSpawnExactState::new(self.p)
    }

    fn push_a(&mut self, g: &mut MultiSpawnExactState, a: CapacityProfile) -> Result<()> {
        g.update_a(&a, &mut self.work)
    }

    fn push_b(&mut self, g: &mut MultiSpawnExactState, b: CapacityProfile) -> Result<()> {
        g.update_b(&b, &mut self.work)
    }

    fn close(&mut self, g: MultiSpawnExactState) -> Result<CapacityProfile> {
        g.finalize(&mut self.work)
    }

    fn component_cells(c: &CapacityProfile) -> usize {
        c.values().len() + 1
    }

    fn group_cells(g: &MultiSpawnExactState) -> usize {
        g.cells()
    }
}

fn online_result(out: (CapacityProfile, ExactAlgebra, StreamStats), fold: FoldStats) -> ExactOnline {
    let (profile, alg, stream) = out;
    let hwm = profile.hwm();
    ExactOnline { result: ExactResult { profile, hwm, work: alg.work }, stream, fold }
}

/// Stream `trace` once and return `H[1..=p]`.
pub fn exact_online(trace: &TraceEventSeq, p: usize) -> Result<ExactOnline> {
    let mut folder = Folder::new(StreamingAnalyzer::new(ExactAlgebra::new(p)?));
    for e in &trace.events {
        folder.feed(e)?;
    }
    let (out, fold) = folder.finish()?;
    Ok(online_result(out, fold))
}

/// Finish a caller-driven streaming run, e.g. one fed by
/// [`fold_pipelined`](crate::spdag::fold_pipelined).
pub fn exact_online_finish(out: (CapacityProfile, ExactAlgebra, StreamStats), fold: FoldStats) -> ExactOnline {
    online_result(out, fold)
}

/// Convenience wrapper returning only `H[1..=p]`.
pub fn exact_hwm(trace: &TraceEventSeq, p: usize) -> Result<Vec<i64>> {
    let (profile, _, _) = fold_trace(trace, StreamingAnalyzer::new(ExactAlgebra::new(p)?))?;
    Ok(profile.hwm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::brute_hwm;
    use crate::spdag::build_spdag;
    use crate::trace::{gen_memory_explosion, RandomSpConfig, SpawnShape};
    use proptest::prelude::*;

    fn l(t: i64, m: i64) -> SpTree {
        SpTree::leaf(t, m)
    }

    #[test]
    fn offline_examples() {
        let pair = SpTree::parallel(l(2, 3), l(-1, 4));
        assert_eq!(exact_offline(&pair, 2).unwrap().hwm, [6, 7]);
        let me3 = build_spdag(&gen_memory_explosion(3).unwrap()).unwrap();
        assert_eq!(exact_offline(&me3, 3).unwrap().hwm, [3, 3, 3]);
        assert_eq!(exact_offline(&l(5, 7), 4).unwrap().hwm, [7, 7, 7, 7]);
        assert!(exact_offline(&l(5, 7), 0).is_err());
    }

    #[test]
    fn group_matches_desugared_example() {
        let ms = SpTree::multi_spawn(vec![l(0, 0), l(2, 3), l(-1, 1)]);
        assert_eq!(exact_grouped(&ms, 4).unwrap().profile.values(), [1, 3, 4]);
        assert_eq!(exact_offline(&ms, 4).unwrap().profile.values(), [1, 3, 4]);
    }

    #[test]
    fn streamed_memory_explosion() {
        let t = gen_memory_explosion(3).unwrap();
        assert_eq!(exact_online(&t, 3).unwrap().result.hwm, [3, 3, 3]);
        assert_eq!(exact_hwm(&t, 1).unwrap(), [3]);
    }

    #[test]
    fn deep_memory_explosion_space() {
        let n = 10_000;
        let t = gen_memory_explosion(n).unwrap();
        let run = exact_online(&t, 128).unwrap();
        assert!(run.result.hwm.iter().all(|&h| h == n as i64));
        assert_eq!(run.stream.peak_frames, n);
        assert!(run.stream.peak_cells <= 16 * n, "{}", run.stream.peak_cells);
    }

    fn corpus_tree(seed: u64, strands: usize) -> (TraceEventSeq, SpTree) {
        let shape = [SpawnShape::Flat, SpawnShape::Balanced, SpawnShape::Mixed][(seed % 3) as usize];
        let trace = RandomSpConfig::new(seed, 6, 4, 64).with_max_strands(strands).with_shape(shape).generate();
        let tree = build_spdag(&trace).unwrap();
        (trace, tree)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn three_way_agreement(seed in any::<u64>(), p in 1usize..5) {
            let (trace, tree) = corpus_tree(seed, 20);
            let brute = brute_hwm(&tree, p).unwrap();
            prop_assert_eq!(&exact_offline(&tree, p).unwrap().hwm, &brute);
            prop_assert_eq!(&exact_grouped(&tree, p).unwrap().hwm, &brute);
            prop_assert_eq!(&exact_online(&trace, p).unwrap().result.hwm, &brute);
        }

        #[test]
        fn large_p_matches_offline(seed in any::<u64>()) {
            let (trace, tree) = corpus_tree(seed, 200);
            for p in [1, 2, 8, 128] {
                let off = exact_offline(&tree, p).unwrap();
                let on = exact_online(&trace, p).unwrap().result;
                prop_assert_eq!(&off.profile, &on.profile);
                prop_assert!(off.hwm.windows(2).all(|w| w[0] <= w[1]));
                let s = off.profile.s();
                prop_assert!(off.hwm[s.max(1) - 1..].iter().all(|&h| h == off.hwm[p - 1]));
            }
        }
    }
}
