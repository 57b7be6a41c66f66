use std::io::BufRead;
use std::sync::mpsc;

use super::{StrandAccumulator, StrandSummary};
use crate::error::{Error, Result};
use crate::trace::{Diagnostic, EventReader, ParseOptions, TraceEvent, TraceEventSeq};

/// Callbacks driven by a single serial pass over a trace.
///
/// For every frame the driver reports, in order: `frame_enter`, the first
/// strand, then for each spawn `spawn_enter` (the child frame follows) and
/// `spawn_exit` once the child has returned, each followed by the next
/// continuation strand. A sync with outstanding children reports the strand
/// it closes and then `sync`. The frame ends with the trailing strand and
/// `frame_exit`. An implicit sync before `SpawnEnd`/`End` is reported like
/// an explicit one.
pub trait Analyzer {
    type Output;

    fn frame_enter(&mut self) -> Result<()> {
        Ok(())
    }
    fn strand(&mut self, strand: StrandSummary) -> Result<()>;
    fn spawn_enter(&mut self) -> Result<()> {
        Ok(())
    }
    fn spawn_exit(&mut self) -> Result<()> {
        Ok(())
    }
    fn sync(&mut self) -> Result<()> {
        Ok(())
    }
    fn frame_exit(&mut self) -> Result<()> {
        Ok(())
    }
    fn finish(self) -> Result<Self::Output>;
}

/// Counters collected by the driver itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FoldStats {
    pub events: usize,
    pub strands: usize,
    /// Deepest frame nesting seen, root counted as 1.
    pub max_depth: usize,
}

/// Incremental driver: feed events one at a time, then `finish`.
///
/// Holds one counter per open frame plus the current strand, and checks
/// bracket structure and serial prefix sums on the fly.
pub struct Folder<A> {
    analyzer: A,
    strand: StrandAccumulator,
    /// Outstanding spawned children per open frame.
    frames: Vec<usize>,
    prefix: i64,
    started: bool,
    ended: bool,
    stats: FoldStats,
}

impl<A: Analyzer> Folder<A> {
    pub fn new(analyzer: A) -> Self {
        Self::with_sites(analyzer, false)
    }

    /// Like `new`, but strands carry per-site attribution.
    pub fn with_sites(analyzer: A, track_sites: bool) -> Self {
        Self {
            analyzer,
            strand: StrandAccumulator::new(track_sites),
            frames: Vec::new(),
            prefix: 0,
            started: false,
            ended: false,
            stats: FoldStats::default(),
        }
    }

    pub fn stats(&self) -> FoldStats {
        self.stats
    }

    pub fn analyzer(&self) -> &A {
        &self.analyzer
    }

    fn invalid(d: Diagnostic) -> Error {
        Error::InvalidTrace(vec![d])
    }

    fn emit_strand(&mut self) -> Result<()> {
        self.stats.strands += 1;
        let s = self.strand.take();
        self.analyzer.strand(s)
    }

    fn sync_top(&mut self) -> Result<()> {
        self.emit_strand()?;
        self.analyzer.sync()?;
        *self.frames.last_mut().expect("open frame") = 0;
        Ok(())
    }

    fn exit_frame(&mut self) -> Result<()> {
        if *self.frames.last().expect("open frame") > 0 {
            self.sync_top()?;
        }
        self.emit_strand()?;
        self.analyzer.frame_exit()?;
        self.frames.pop();
        Ok(())
    }

    pub fn feed(&mut self, event: &TraceEvent) -> Result<()> {
        let index = self.stats.events;
        self.stats.events += 1;
        if self.ended {
            return Err(Self::invalid(Diagnostic::OutsideFrame { index }));
        }
        if !self.started {
            if *event != TraceEvent::Begin {
                return Err(Self::invalid(if index == 0 {
                    Diagnostic::MissingBegin
                } else {
                    Diagnostic::OutsideFrame { index }
                }));
            }
            self.started = true;
            self.frames.push(0);
            self.stats.max_depth = 1;
            return self.analyzer.frame_enter();
        }
        match event {
            TraceEvent::Begin => return Err(Self::invalid(Diagnostic::NestedBegin { index })),
            TraceEvent::Alloc { .. } | TraceEvent::Free { .. } => {
                let delta = event.delta().ok_or(Self::invalid(Diagnostic::SizeOutOfRange { index }))?;
                self.prefix = self
                    .prefix
                    .checked_add(delta)
                    .ok_or(Self::invalid(Diagnostic::PrefixOverflow { index }))?;
                if self.prefix < 0 {
                    return Err(Self::invalid(Diagnostic::NegativePrefix { index }));
                }
                self.strand.push(delta, event.loc())?;
            }
            TraceEvent::Spawn => {
                self.emit_strand()?;
                *self.frames.last_mut().expect("open frame") += 1;
                self.analyzer.spawn_enter()?;
                self.frames.push(0);
                self.stats.max_depth = self.stats.max_depth.max(self.frames.len());
                self.analyzer.frame_enter()?;
            }
            TraceEvent::SpawnEnd => {
                if self.frames.len() <= 1 {
                    return Err(Self::invalid(Diagnostic::SpawnEndWithoutSpawn { index }));
                }
                self.exit_frame()?;
                self.analyzer.spawn_exit()?;
            }
            TraceEvent::Sync => {
                if *self.frames.last().expect("open frame") > 0 {
                    self.sync_top()?;
                }
            }
            TraceEvent::End => {
                if self.frames.len() > 1 {
                    return Err(Self::invalid(Diagnostic::UnclosedSpawn { index, open: self.frames.len() - 1 }));
                }
                self.exit_frame()?;
                self.ended = true;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(A::Output, FoldStats)> {
        if !self.started {
            return Err(Self::invalid(if self.stats.events == 0 { Diagnostic::Empty } else { Diagnostic::MissingBegin }));
        }
        if !self.ended {
            return Err(Self::invalid(Diagnostic::MissingEnd));
        }
        Ok((self.analyzer.finish()?, self.stats))
    }
}

/// Drive `analyzer` over an in-memory trace.
pub fn fold_trace<A: Analyzer>(trace: &TraceEventSeq, analyzer: A) -> Result<A::Output> {
    let mut folder = Folder::new(analyzer);
    for event in &trace.events {
        folder.feed(event)?;
    }
    Ok(folder.finish()?.0)
}

const BATCH: usize = 1024;

/// Parse on a helper thread and fold on the caller's thread.
///
/// The two sides are joined by a bounded channel of `capacity` event
/// batches, so memory stays bounded for arbitrarily long inputs.
pub fn fold_pipelined<R, A>(
    input: R,
    opts: ParseOptions,
    folder: Folder<A>,
    capacity: usize,
) -> Result<(A::Output, FoldStats)>
where
    R: BufRead + Send,
    A: Analyzer,
{
    let (tx, rx) = mpsc::sync_channel::<Result<Vec<TraceEvent>>>(capacity.max(1));
    std::thread::scope(|scope| {
        scope.spawn(move || {
            let mut batch = Vec::with_capacity(BATCH);
            let mut reader = EventReader::new(input, opts);
            for event in reader.by_ref() {
                match event {
                    Ok(e) => {
                        batch.push(e);
                        if batch.len() == BATCH {
                            let full = std::mem::replace(&mut batch, Vec::with_capacity(BATCH));
                            if tx.send(Ok(full)).is_err() {
                                return;
                            }
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                }
            }
            for w in reader.warnings() {
                log::warn!("{w}");
            }
            if !batch.is_empty() {
                let _ = tx.send(Ok(batch));
            }
        });
        let mut folder = folder;
        // Dropping `rx` on an early return unblocks the reader thread.
        for batch in rx {
            for event in &batch? {
                folder.feed(event)?;
            }
        }
        folder.finish()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spdag::{build_spdag, SpTree, SpTreeBuilder};
    use crate::trace::{gen_memory_explosion, gen_random_sp, write_trace};
    use proptest::prelude::*;

    #[derive(Default)]
    struct Recorder(Vec<String>);

    impl Analyzer for Recorder {
        type Output = Vec<String>;
        fn frame_enter(&mut self) -> Result<()> {
            self.0.push("enter".into());
            Ok(())
        }
        fn strand(&mut self, s: StrandSummary) -> Result<()> {
            self.0.push(format!("{}/{}", s.t, s.m));
            Ok(())
        }
        fn spawn_enter(&mut self) -> Result<()> {
            self.0.push("spawn".into());
            Ok(())
        }
        fn spawn_exit(&mut self) -> Result<()> {
            self.0.push("return".into());
            Ok(())
        }
        fn sync(&mut self) -> Result<()> {
            self.0.push("sync".into());
            Ok(())
        }
        fn frame_exit(&mut self) -> Result<()> {
            self.0.push("exit".into());
            Ok(())
        }
        fn finish(self) -> Result<Vec<String>> {
            Ok(self.0)
        }
    }

    /// Rebuilds the decomposition tree from callbacks alone.
    struct Rebuild {
        out: SpTreeBuilder,
        // Per frame: finished parts, open spawn group, pending strand.
        frames: Vec<(Vec<usize>, Vec<usize>, Option<usize>)>,
        returned: Option<usize>,
    }

    impl Analyzer for Rebuild {
        type Output = SpTree;
        fn frame_enter(&mut self) -> Result<()> {
            self.frames.push(Default::default());
            Ok(())
        }
        fn strand(&mut self, s: StrandSummary) -> Result<()> {
            let id = self.out.leaf(StrandSummary::new(s.t, s.m));
            self.frames.last_mut().unwrap().2 = Some(id);
            Ok(())
        }
        fn spawn_enter(&mut self) -> Result<()> {
            let f = self.frames.last_mut().unwrap();
            f.1.push(f.2.take().unwrap());
            Ok(())
        }
        fn spawn_exit(&mut self) -> Result<()> {
            let child = self.returned.take().unwrap();
            self.frames.last_mut().unwrap().1.push(child);
            Ok(())
        }
        fn sync(&mut self) -> Result<()> {
            let f = self.frames.last_mut().unwrap();
            let mut c = std::mem::take(&mut f.1);
            c.push(f.2.take().unwrap());
            let g = self.out.multi_spawn(c);
            self.frames.last_mut().unwrap().0.push(g);
            Ok(())
        }
        fn frame_exit(&mut self) -> Result<()> {
            let (parts, _, tail) = self.frames.pop().unwrap();
            let mut it = parts.into_iter().chain(tail);
            let first = it.next().unwrap();
            self.returned = Some(it.fold(first, |a, b| self.out.series(a, b)));
            Ok(())
        }
        fn finish(self) -> Result<SpTree> {
            let root = self.returned.unwrap();
            self.out.finish(root)
        }
    }

    fn rebuild() -> Rebuild {
        Rebuild { out: SpTreeBuilder::default(), frames: Vec::new(), returned: None }
    }

    fn strip_sites(t: &SpTree) -> String {
        t.to_string()
    }

    #[test]
    fn callback_order() {
        let log = fold_trace(&gen_memory_explosion(2).unwrap(), Recorder::default()).unwrap();
        assert_eq!(
            log,
            ["enter", "0/0", "spawn", "enter", "0/1", "exit", "return", "1/1", "sync", "-1/0", "exit"]
        );
    }

    #[test]
    fn implicit_sync_reported() {
        use TraceEvent::*;
        let log = fold_trace(&vec![Begin, Spawn, SpawnEnd, End].into(), Recorder::default()).unwrap();
        assert_eq!(log, ["enter", "0/0", "spawn", "enter", "0/0", "exit", "return", "0/0", "sync", "0/0", "exit"]);
    }

    #[test]
    fn structural_errors() {
        use TraceEvent::*;
        let e = fold_trace(&vec![Begin, SpawnEnd, End].into(), Recorder::default()).unwrap_err();
        assert!(e.to_string().contains("SpawnEnd without Spawn at event 1"), "{e}");
        let e = fold_trace(&vec![Begin, TraceEvent::free(1), End].into(), Recorder::default()).unwrap_err();
        assert!(e.to_string().contains("prefix-sum negative"), "{e}");
        assert!(fold_trace(&vec![].into(), Recorder::default()).is_err());
        assert!(fold_trace(&vec![Begin].into(), Recorder::default()).is_err());
    }

    #[test]
    fn pipelined_matches_direct() {
        let trace = gen_random_sp(7, 6, 4, 100);
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let direct = fold_trace(&trace, Recorder::default()).unwrap();
        let (piped, stats) =
            fold_pipelined(buf.as_slice(), ParseOptions::default(), Folder::new(Recorder::default()), 2).unwrap();
        assert_eq!(direct, piped);
        assert_eq!(stats.events, trace.len());
        assert_eq!(stats.max_depth, trace.max_depth());
    }

    #[test]
    fn pipelined_reports_parse_errors() {
        let input = "{\"k\":\"begin\"}\nnot json\n";
        let err = fold_pipelined(input.as_bytes(), ParseOptions::default(), Folder::new(Recorder::default()), 1)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn deep_trace_folds() {
        let (_, stats) = {
            let mut f = Folder::new(Recorder::default());
            for e in &gen_memory_explosion(10_000).unwrap().events {
                f.feed(e).unwrap();
            }
            f.finish().unwrap()
        };
        assert_eq!(stats.max_depth, 10_000);
    }

    proptest! {
        #[test]
        fn callbacks_rebuild_the_tree(seed in any::<u64>(), depth in 1usize..7, width in 1usize..5) {
            let trace = gen_random_sp(seed, depth, width, 50);
            let direct = build_spdag(&trace).unwrap();
            let folded = fold_trace(&trace, rebuild()).unwrap();
            prop_assert_eq!(strip_sites(&direct), strip_sites(&folded));
        }

        #[test]
        fn strands_replay_the_serial_sum(seed in any::<u64>(), depth in 1usize..7, width in 1usize..5) {
            let trace = gen_random_sp(seed, depth, width, 50);
            let log = fold_trace(&trace, Recorder::default()).unwrap();
            let total: i64 = log
                .iter()
                .filter_map(|s| s.split_once('/').map(|(t, _)| t.parse::<i64>().unwrap()))
                .sum();
            prop_assert_eq!(total, trace.net_bytes());
        }
    }
}
