use super::{NodeId, SpTree, SpTreeBuilder, StrandAccumulator};
use crate::error::{Error, Result};
use crate::trace::{validate_trace, TraceEvent, TraceEventSeq};

#[derive(Default)]
struct Frame {
    /// Completed sync groups and strands, composed in series at frame exit.
    groups: Vec<NodeId>,
    /// Children of the open multi-spawn group: `a0, b1, a1, ..., b_i`.
    spawns: Vec<NodeId>,
}

struct Builder {
    out: SpTreeBuilder,
    strand: StrandAccumulator,
    frames: Vec<Frame>,
}

impl Builder {
    fn close_strand(&mut self) -> NodeId {
        let s = self.strand.take();
        self.out.leaf(s)
    }

    fn sync(&mut self) {
        let a = self.close_strand();
        let frame = self.frames.last_mut().expect("open frame");
        let mut children = std::mem::take(&mut frame.spawns);
        children.push(a);
        let group = self.out.multi_spawn(children);
        self.frames.last_mut().expect("open frame").groups.push(group);
    }

    fn exit_frame(&mut self) -> NodeId {
        if !self.frames.last().expect("open frame").spawns.is_empty() {
            self.sync();
        }
        let tail = self.close_strand();
        let frame = self.frames.pop().expect("open frame");
        let mut parts = frame.groups.into_iter().chain([tail]);
        let first = parts.next().expect("at least the tail strand");
        parts.fold(first, |acc, next| self.out.series(acc, next))
    }
}

/// Recover the decomposition tree of a valid trace.
///
/// Strands end at `Spawn`, `SpawnEnd`, `End` and at any `Sync` that has
/// outstanding children; empty strands are kept as zero leaves. Each sync
/// group becomes one multi-spawn node and a frame's groups compose in series.
pub fn build_spdag(trace: &TraceEventSeq) -> Result<SpTree> {
    let diags = validate_trace(trace);
    if !diags.is_empty() {
        return Err(Error::InvalidTrace(diags));
    }
    let mut b = Builder {
        out: SpTreeBuilder::with_capacity(trace.len()),
        strand: StrandAccumulator::new(true),
        frames: Vec::new(),
    };
    let mut root = None;
    for event in &trace.events {
        match event {
            TraceEvent::Begin => b.frames.push(Frame::default()),
            TraceEvent::Alloc { .. } | TraceEvent::Free { .. } => {
                let delta = event.delta().expect("validated size");
                b.strand.push(delta, event.loc())?;
            }
            TraceEvent::Spawn => {
                let a = b.close_strand();
                b.frames.last_mut().expect("open frame").spawns.push(a);
                b.frames.push(Frame::default());
            }
            TraceEvent::SpawnEnd => {
                let child = b.exit_frame();
                b.frames.last_mut().expect("parent frame").spawns.push(child);
            }
            TraceEvent::Sync => {
                if !b.frames.last().expect("open frame").spawns.is_empty() {
                    b.sync();
                }
            }
            TraceEvent::End => root = Some(b.exit_frame()),
        }
    }
    b.out.finish(root.expect("validated trace has End"))
}
