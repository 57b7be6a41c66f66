//! Synthetic trace families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TraceEvent, TraceEventSeq, TraceMeta};
use crate::error::{Error, Result};

/// Source location of the single allocation site in the memory-explosion family.
pub const MEMORY_EXPLOSION_LOC: &str = "me.c:3";

/// Serial trace of the recursive program
///
/// ```text
/// explode(n):
///     if n > 1: spawn explode(n - 1)
///     b = malloc(1)
///     sync
///     free(b)
/// ```
///
/// executed child-first on one worker. Built iteratively so `n` may be large.
pub fn gen_memory_explosion(n: usize) -> Result<TraceEventSeq> {
    if n == 0 {
        return Err(Error::InvalidArgument("memory explosion needs n >= 1".into()));
    }
    let mut events = Vec::with_capacity(5 * n);
    events.push(TraceEvent::Begin);
    events.extend(std::iter::repeat_n(TraceEvent::Spawn, n - 1));
    let body = [
        TraceEvent::alloc_at(1, MEMORY_EXPLOSION_LOC),
        TraceEvent::Sync,
        TraceEvent::free_at(1, MEMORY_EXPLOSION_LOC),
    ];
    events.extend(body.iter().cloned());
    for _ in 1..n {
        events.push(TraceEvent::SpawnEnd);
        events.extend(body.iter().cloned());
    }
    events.push(TraceEvent::End);
    Ok(TraceEventSeq {
        events,
        meta: TraceMeta { name: Some(format!("memory-explosion-{n}")), seed: None },
    })
}

/// How spawns are grouped within a frame.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SpawnShape {
    /// Between one and `max_children` spawns per sync.
    Flat,
    /// Exactly two spawns per sync while depth allows: a full binary spawn tree.
    Balanced,
    /// Choose `Flat` or `Balanced` independently per frame.
    Mixed,
}

#[derive(Clone, Debug)]
pub struct RandomSpConfig {
    pub seed: u64,
    pub max_depth: usize,
    pub max_children: usize,
    /// Allocation sizes are drawn from `1..=alloc_scale`.
    pub alloc_scale: u64,
    /// Upper bound on the number of strands (leaves of the decomposition).
    pub max_strands: Option<usize>,
    /// Upper bound on memory events per strand.
    pub max_mem_events: usize,
    /// Upper bound on sync-terminated spawn groups per frame.
    pub max_groups: usize,
    pub shape: SpawnShape,
}

impl RandomSpConfig {
    pub fn new(seed: u64, max_depth: usize, max_children: usize, alloc_scale: u64) -> Self {
        Self {
            seed,
            max_depth: max_depth.max(1),
            max_children: max_children.max(1),
            alloc_scale: alloc_scale.max(1),
            max_strands: None,
            max_mem_events: 3,
            max_groups: 2,
            shape: SpawnShape::Mixed,
        }
    }

    pub fn with_max_strands(mut self, max_strands: usize) -> Self {
        self.max_strands = Some(max_strands.max(1));
        self
    }

    pub fn with_shape(mut self, shape: SpawnShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn with_max_groups(mut self, max_groups: usize) -> Self {
        self.max_groups = max_groups.max(1);
        self
    }

    pub fn with_max_mem_events(mut self, n: usize) -> Self {
        self.max_mem_events = n;
        self
    }

    pub fn generate(&self) -> TraceEventSeq {
        let mut g = Generator {
            cfg: self,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            events: vec![TraceEvent::Begin],
            frames: Vec::new(),
            strands: 1,
        };
        g.frame(1);
        g.events.push(TraceEvent::End);
        TraceEventSeq {
            events: g.events,
            meta: TraceMeta { name: None, seed: Some(self.seed) },
        }
    }
}

/// Deterministic random series-parallel trace with default strand and
/// memory-event limits. See [`RandomSpConfig`] for the full set of knobs.
pub fn gen_random_sp(seed: u64, max_depth: usize, max_children: usize, alloc_scale: u64) -> TraceEventSeq {
    RandomSpConfig::new(seed, max_depth, max_children, alloc_scale).generate()
}

#[derive(Clone)]
struct Block {
    size: u64,
    loc: String,
}

#[derive(Default)]
struct FrameMem {
    /// Live blocks allocated by this frame's strands or by synced children.
    own: Vec<Block>,
    /// Leftovers of children that have returned but not been synced.
    unsynced: Vec<Block>,
    outstanding: usize,
}

struct Generator<'a> {
    cfg: &'a RandomSpConfig,
    rng: ChaCha8Rng,
    events: Vec<TraceEvent>,
    frames: Vec<FrameMem>,
    strands: usize,
}

impl Generator<'_> {
    fn budget_left(&self) -> usize {
        self.cfg.max_strands.map_or(usize::MAX, |m| m.saturating_sub(self.strands))
    }

    // Frees only touch blocks visible from the current strand: those
    // allocated by its own frame or by ancestor frames before the spawn
    // chain. Those are all predecessors in the computation DAG, so every
    // downset containing a free also contains its allocation.
    fn strand(&mut self) {
        let n = self.rng.gen_range(0..=self.cfg.max_mem_events);
        for _ in 0..n {
            let visible: usize = self.frames.iter().map(|f| f.own.len()).sum();
            if visible > 0 && self.rng.gen_bool(0.45) {
                let mut pick = self.rng.gen_range(0..visible);
                for frame in self.frames.iter_mut() {
                    if pick < frame.own.len() {
                        let block = frame.own.swap_remove(pick);
                        self.events.push(TraceEvent::Free { size: block.size, loc: Some(block.loc) });
                        break;
                    }
                    pick -= frame.own.len();
                }
            } else {
                let size = self.rng.gen_range(1..=self.cfg.alloc_scale);
                let loc = format!("gen.c:{}", 10 * self.rng.gen_range(1..=8));
                self.events.push(TraceEvent::Alloc { size, loc: Some(loc.clone()) });
                self.frames.last_mut().expect("open frame").own.push(Block { size, loc });
            }
            if self.rng.gen_bool(0.05) {
                // A sync with nothing outstanding is structurally a no-op.
                if self.frames.last().expect("open frame").outstanding == 0 {
                    self.events.push(TraceEvent::Sync);
                }
            }
        }
    }

    fn sync_frame(&mut self) {
        let top = self.frames.last_mut().expect("open frame");
        top.outstanding = 0;
        let leftovers = std::mem::take(&mut top.unsynced);
        top.own.extend(leftovers);
    }

    fn frame(&mut self, depth: usize) {
        self.frames.push(FrameMem::default());
        self.strand();
        let balanced = match self.cfg.shape {
            SpawnShape::Flat => false,
            SpawnShape::Balanced => true,
            SpawnShape::Mixed => self.rng.gen_bool(0.5),
        };
        let groups = if depth < self.cfg.max_depth {
            if balanced { 1 } else { self.rng.gen_range(0..=self.cfg.max_groups) }
        } else {
            0
        };
        let mut open_group = false;
        for g in 0..groups {
            let want = if balanced {
                self.cfg.max_children.min(2)
            } else {
                self.rng.gen_range(1..=self.cfg.max_children)
            };
            let mut spawned = 0;
            for _ in 0..want {
                // First spawn of a group also reserves the post-sync strand.
                let need = if spawned == 0 { 3 } else { 2 };
                if self.budget_left() < need {
                    break;
                }
                self.strands += need;
                self.frames.last_mut().expect("open frame").outstanding += 1;
                self.events.push(TraceEvent::Spawn);
                self.frame(depth + 1);
                self.events.push(TraceEvent::SpawnEnd);
                self.strand();
                spawned += 1;
            }
            if spawned == 0 {
                break;
            }
            let last = g + 1 == groups;
            if last && self.rng.gen_bool(0.3) {
                // Leave the group to the implicit sync at frame exit.
                open_group = true;
            } else {
                self.events.push(TraceEvent::Sync);
                self.sync_frame();
                self.strand();
            }
        }
        if open_group {
            self.sync_frame();
        }
        let done = self.frames.pop().expect("open frame");
        if let Some(parent) = self.frames.last_mut() {
            parent.unsynced.extend(done.own);
            parent.unsynced.extend(done.unsynced);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::validate_trace;
    use proptest::prelude::*;

    #[test]
    fn memory_explosion_small_cases() {
        use TraceEvent::*;
        let one = gen_memory_explosion(1).unwrap().events;
        assert_eq!(
            one,
            vec![Begin, TraceEvent::alloc_at(1, "me.c:3"), Sync, TraceEvent::free_at(1, "me.c:3"), End]
        );
        let two = gen_memory_explosion(2).unwrap().events;
        let kinds: Vec<_> = two.iter().map(TraceEvent::to_string).collect();
        assert_eq!(
            kinds,
            ["Begin", "Spawn", "Alloc 1", "Sync", "Free 1", "SpawnEnd", "Alloc 1", "Sync", "Free 1", "End"]
        );
        assert!(gen_memory_explosion(0).is_err());
    }

    #[test]
    fn memory_explosion_counts() {
        for n in [1, 2, 5, 40] {
            let t = gen_memory_explosion(n).unwrap();
            assert_eq!(t.count_kind("alloc"), n);
            assert_eq!(t.count_kind("free"), n);
            assert_eq!(t.count_kind("spawn"), n - 1);
            assert_eq!(t.count_kind("sync"), n);
            assert_eq!(t.max_depth(), n);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        assert_eq!(gen_random_sp(1, 5, 3, 100), gen_random_sp(1, 5, 3, 100));
        assert_ne!(gen_random_sp(1, 5, 3, 100).events, gen_random_sp(2, 5, 3, 100).events);
    }

    proptest! {
        #[test]
        fn random_traces_validate(seed in any::<u64>(), depth in 1usize..7, width in 1usize..6, scale in 1u64..1000) {
            let trace = gen_random_sp(seed, depth, width, scale);
            prop_assert!(validate_trace(&trace).is_empty());
            let mut running = 0i64;
            for e in &trace.events {
                running += e.delta().unwrap_or(0);
                prop_assert!(running >= 0);
            }
        }

        #[test]
        fn strand_budget_respected(seed in any::<u64>(), cap in 1usize..30) {
            let trace = RandomSpConfig::new(seed, 6, 4, 50).with_max_strands(cap).generate();
            let tree = crate::spdag::build_spdag(&trace).unwrap();
            prop_assert!(tree.leaf_count() <= cap);
        }
    }
}
