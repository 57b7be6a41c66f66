use super::{Analyzer, StrandSummary};
use crate::error::{Error, Result};

/// Component algebra evaluated bottom-up while a trace streams past.
///
/// `Group` accumulates one multi-spawn group child by child; it sees
/// `a0, b1, a1, ..., bk, ak` in that order and is closed once.
pub trait StreamAlgebra {
    type Component;
    type Group;

    fn leaf(&mut self, strand: &StrandSummary) -> Result<Self::Component>;
    fn series(&mut self, first: Self::Component, second: Self::Component) -> Result<Self::Component>;
    fn open(&mut self) -> Self::Group;
    fn push_a(&mut self, group: &mut Self::Group, a: Self::Component) -> Result<()>;
    fn push_b(&mut self, group: &mut Self::Group, b: Self::Component) -> Result<()>;
    fn close(&mut self, group: Self::Group) -> Result<Self::Component>;

    /// Storage cells held by a value, for space accounting.
    fn component_cells(c: &Self::Component) -> usize;
    fn group_cells(g: &Self::Group) -> usize;
}

/// Space and depth figures of one streaming run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub peak_frames: usize,
    /// Largest number of cells held at once across all open frames.
    pub peak_cells: usize,
}

struct Frame<A: StreamAlgebra> {
    done: Option<A::Component>,
    pending: Option<A::Component>,
    group: Option<A::Group>,
    cells: usize,
}

impl<A: StreamAlgebra> Frame<A> {
    fn recount(&mut self) -> usize {
        self.cells = self.done.as_ref().map_or(0, A::component_cells)
            + self.pending.as_ref().map_or(0, A::component_cells)
            + self.group.as_ref().map_or(0, A::group_cells);
        self.cells
    }
}

/// Runs a [`StreamAlgebra`] as an [`Analyzer`], holding one frame record
/// per open frame.
pub struct StreamingAnalyzer<A: StreamAlgebra> {
    alg: A,
    frames: Vec<Frame<A>>,
    returned: Option<A::Component>,
    live: usize,
    stats: StreamStats,
}

impl<A: StreamAlgebra> StreamingAnalyzer<A> {
    pub fn new(alg: A) -> Self {
        Self { alg, frames: Vec::new(), returned: None, live: 0, stats: StreamStats::default() }
    }

    fn protocol(msg: &str) -> Error {
        Error::Protocol(msg.to_owned())
    }

    fn top(&mut self) -> Result<&mut Frame<A>> {
        self.frames.last_mut().ok_or_else(|| Self::protocol("no open frame"))
    }

    fn touch(&mut self) {
        if let Some(f) = self.frames.last_mut() {
            let before = f.cells;
            let after = f.recount();
            self.live = self.live - before + after;
        }
        let extra = self.returned.as_ref().map_or(0, A::component_cells);
        self.stats.peak_cells = self.stats.peak_cells.max(self.live + extra);
    }

    fn append_done(&mut self, c: A::Component) -> Result<()> {
        let done = self.top()?.done.take();
        let joined = match done {
            Some(d) => self.alg.series(d, c)?,
            None => c,
        };
        self.top()?.done = Some(joined);
        Ok(())
    }
}

impl<A: StreamAlgebra> Analyzer for StreamingAnalyzer<A> {
    type Output = (A::Component, A, StreamStats);

    fn frame_enter(&mut self) -> Result<()> {
        self.frames.push(Frame { done: None, pending: None, group: None, cells: 0 });
        self.stats.peak_frames = self.stats.peak_frames.max(self.frames.len());
        Ok(())
    }

    fn strand(&mut self, strand: StrandSummary) -> Result<()> {
        let c = self.alg.leaf(&strand)?;
        let top = self.top()?;
        if top.pending.replace(c).is_some() {
            return Err(Self::protocol("strand reported twice"));
        }
        self.touch();
        Ok(())
    }

    fn spawn_enter(&mut self) -> Result<()> {
        let a = self.top()?.pending.take().ok_or_else(|| Self::protocol("spawn without strand"))?;
        let mut group = match self.top()?.group.take() {
            Some(g) => g,
            None => self.alg.open(),
        };
        self.alg.push_a(&mut group, a)?;
        self.top()?.group = Some(group);
        self.touch();
        Ok(())
    }

    fn spawn_exit(&mut self) -> Result<()> {
        let b = self.returned.take().ok_or_else(|| Self::protocol("return without child"))?;
        let mut group = self.top()?.group.take().ok_or_else(|| Self::protocol("return without spawn"))?;
        self.alg.push_b(&mut group, b)?;
        self.top()?.group = Some(group);
        self.touch();
        Ok(())
    }

    fn sync(&mut self) -> Result<()> {
        let a = self.top()?.pending.take().ok_or_else(|| Self::protocol("sync without strand"))?;
        let mut group = self.top()?.group.take().ok_or_else(|| Self::protocol("sync without spawn"))?;
        self.alg.push_a(&mut group, a)?;
        let c = self.alg.close(group)?;
        self.append_done(c)?;
        self.touch();
        Ok(())
    }

    fn frame_exit(&mut self) -> Result<()> {
        let tail = self.top()?.pending.take().ok_or_else(|| Self::protocol("exit without strand"))?;
        if self.top()?.group.is_some() {
            return Err(Self::protocol("exit with an open spawn group"));
        }
        self.append_done(tail)?;
        let frame = self.frames.pop().ok_or_else(|| Self::protocol("no open frame"))?;
        self.live -= frame.cells;
        self.returned = frame.done;
        self.touch();
        Ok(())
    }

    fn finish(self) -> Result<Self::Output> {
        if !self.frames.is_empty() {
            return Err(Self::protocol("frames left open"));
        }
        let root = self.returned.ok_or_else(|| Self::protocol("nothing returned"))?;
        Ok((root, self.alg, self.stats))
    }
}
